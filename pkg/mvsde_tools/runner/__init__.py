"""Configuration-driven experiment runner.

For more information, see :ref:`mvsde-runner-doc`.

"""

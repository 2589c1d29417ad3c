from setuptools import setup

# This setup.py is only needed for editable installs with older pip versions
# The actual configuration is in pyproject.toml
setup()

"""
Setup script for call-purpose-detector package.

This file exists for backward compatibility.
All configuration is now in pyproject.toml.
"""

from setuptools import setup

setup()

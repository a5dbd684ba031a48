"""Packaging shim for the ipassr project."""

from setuptools import setup

setup()

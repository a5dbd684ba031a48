"""Tests for ipassr."""

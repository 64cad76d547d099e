"""Tests for the cfql package."""

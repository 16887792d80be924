"""Tests for rmst-targeted."""

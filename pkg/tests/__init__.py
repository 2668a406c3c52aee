"""Test suite for large PDF reader."""

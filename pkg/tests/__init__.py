"""Tests package for VMS Solid."""

"""Exact apportionment methods."""

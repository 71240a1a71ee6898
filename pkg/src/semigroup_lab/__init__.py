"""Numerical laboratory for Lp theory of strongly coupled elliptic systems."""

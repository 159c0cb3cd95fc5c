"""Numerical core: distributions, the Kertz curve, benchmarks, policies and ordering."""

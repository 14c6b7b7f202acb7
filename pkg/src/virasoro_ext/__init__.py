"""Exact-arithmetic engine for Virasoro Verma modules."""

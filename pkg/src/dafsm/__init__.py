"""Data-aware finite state machines: parsing, well-formedness checking and benchmarks."""

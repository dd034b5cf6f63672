"""Per-process and per-task energy attribution from RAPL counters and procfs."""

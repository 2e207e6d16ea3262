"""
Billing speedup over worker threads
===================================

Time the billing kernel over growing household counts and thread counts,
then print the wall-time and speedup tables and save them as CSV.
"""

import sys

from meterbench.bench import emit_csv, emit_table, sweep_mcb
from meterbench.bench.experiment import host_cores

sizes = [int(x) for x in sys.argv[1:]] or [1000, 10000]
workers = sorted({1, 2, 4, host_cores()})
print(f"{host_cores()} usable core(s); speedups above that count are not expected")

report = sweep_mcb(sizes, workers, repetitions=5, warmup=1)
print(emit_table(report))
emit_csv(report, "mcb-sweep.csv")
print("wrote mcb-sweep.csv")

"""
Energy credits and the two attribution modes
=============================================

A process's share of a socket is raised to an exponent below one before it
is multiplied by the interval's dynamic energy. Small shares earn
proportionally more, which matches how power grows with utilization.
"""

# %%
from taskenergy.attribution import (
    Domain,
    IntervalLedger,
    LedgerEntry,
    ProcessShare,
    SocketId,
    attribute_conserving,
    attribute_cpu,
    energy_credit,
)

for share in (0.0, 0.05, 0.25, 0.5, 1.0):
    print(f"share {share:4.2f}  credit {energy_credit(share, 0.3):.4f}  linear {share:.4f}")

# %% [markdown]
# One socket, one 2 s interval with 10 J dynamic and 2 J static energy.

# %%
sock = SocketId("n0", 0)
ledger = IntervalLedger(0.0, 2.0, node="n0")
ledger.entries[(sock, Domain.CPU_PACKAGE)] = LedgerEntry(12.0, 2.0, 10.0)

halves = [ProcessShare(pid, rho={sock: 0.5}) for pid in (1, 2)]
faithful = sum(attribute_cpu(p, ledger, 0.3)[0] for p in halves)
print(f"faithful: two halves get {faithful:.4f} J of 10 J dynamic")

# %% [markdown]
# Faithful mode hands out more than was measured. Conserving mode rescales
# the credits on each socket so they add up to the measured energy.

# %%
out, unattributed = attribute_conserving(halves, ledger, 0.3)
print("conserving:", {pid: round(parts[Domain.CPU_PACKAGE][0], 4) for pid, parts in out.items()})

"""Brute-force reference attribution straight from trace text.

Deliberately shares no code with the package: its own line parser, its
own schedule, and high-precision arithmetic (mpmath, 50 digits) evaluated
term by term. Used to check the replay pipeline end to end.
"""

from __future__ import annotations

import re
from collections import defaultdict
from urllib.parse import unquote

import mpmath

mpmath.mp.dps = 50
US = 1_000_000


def _us(text: str) -> int:
    return round(float(text) * US)


def _fields(line: str) -> tuple[str, dict[str, str]]:
    tag, *rest = line.split()
    return tag, dict(item.split("=", 1) for item in rest)


def _map(text: str) -> dict[int, str]:
    if text == "-":
        return {}
    return {int(k): v for k, v in (x.split(":") for x in text.split(","))}


def _str(text: str) -> str:
    return "" if text == "-" else unquote(text)


class OracleTrace:
    def __init__(self, text: str):
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        _, head = _fields(lines[0])
        self.nodes = head["nodes"].split(",")
        self.sockets = int(head["sockets"])
        self.domains = head["domains"].split(",")
        self.wrap = {d: int(head[f"wrap.{d}"]) for d in self.domains}
        self.cpu_tick = mpmath.mpf(head["cpu_tick"])
        self.rapl = defaultdict(list)  # (node, socket, domain) -> [(t_us, uj)]
        self.batches = defaultdict(dict)  # node -> t_us -> {pid: proc}
        self.pods = []  # (t_us, uid, name, node)
        self.gone = {}
        self.idle = {}
        self.end = 0
        for line in lines[1:]:
            tag, f = _fields(line)
            if tag == "RAPL":
                t = _us(f["t"])
                self.rapl[(f["node"], int(f["socket"]), f["domain"])].append((t, int(f["uj"])))
                self.batches[f["node"]].setdefault(t, {})
            elif tag == "PROC":
                t = _us(f["t"])
                self.batches[f["node"]].setdefault(t, {})[int(f["pid"])] = {
                    "cpu": {s: mpmath.mpf(v) * self.cpu_tick for s, v in _map(f["cpu"]).items()},
                    "rss": {s: mpmath.mpf(int(v)) for s, v in _map(f["rss"]).items()},
                    "cgroup": _str(f.get("cgroup", "-")),
                    "start": f.get("start"),
                }
            elif tag == "POD":
                t = _us(f["t"])
                self.pods.append((t, _str(f["uid"]), _str(f.get("name", "-")), f["node"]))
            elif tag == "GONE":
                t = _us(f["t"])
                self.gone.setdefault(_str(f["uid"]), t)
            elif tag == "IDLE":
                t = _us(f["end"])
                self.idle.setdefault(f["node"], (_us(f["start"]), t))
            self.end = max(self.end, t if tag != "IDLE" else _us(f["end"]))

    def reading(self, key, t):
        best = None
        for ts, uj in self.rapl[key]:
            if ts <= t:
                best = (ts, uj)
        return best

    def batch(self, node, t):
        times = [ts for ts in self.batches[node] if ts <= t]
        return self.batches[node][max(times)] if times else {}

    def unwrap(self, domain, a, b):
        d = b - a
        return d if d >= 0 else self.wrap[domain] - a + b


def static_power(tr: OracleTrace) -> dict:
    out = {}
    for key, series in tr.rapl.items():
        lo, hi = tr.idle[key[0]]
        pts = [(t, uj) for t, uj in series if lo <= t <= hi]
        total = sum(tr.unwrap(key[2], a[1], b[1]) for a, b in zip(pts, pts[1:]))
        out[key] = mpmath.mpf(total) / US / (mpmath.mpf(pts[-1][0] - pts[0][0]) / US)
    return out


def _cpu_total(p):
    return sum(p["cpu"].values())


def _same(old, new):
    if old["start"] != new["start"]:
        return False
    return all(new["cpu"].get(s, 0) >= v for s, v in old["cpu"].items())


def attribute(text: str, gamma: float, rapl_s: float = 2.0, poll_s: float = 5.0,
              pod_filter: str = r"^nf-[0-9a-f]+", mode: str = "faithful", model: str = "nonlinear"):
    """Per (node, pid) totals ``[cpu_dyn, cpu_static, dram_dyn, dram_static]`` as mpf."""
    tr = OracleTrace(text)
    g = mpmath.mpf(gamma)
    p_static = static_power(tr)
    t0 = max(end for _, end in tr.idle.values())
    rapl, poll = round(rapl_s * US), round(poll_s * US)
    ticks = list(range(t0 + rapl, tr.end + 1, rapl))
    if (ticks[-1] if ticks else t0) < tr.end:
        ticks.append(tr.end)  # final partial interval
    polls = range(t0 + poll, tr.end + 1, poll)
    actions = sorted([(t, 0) for t in ticks] + [(t, 1) for t in polls])

    tracked = {}  # (node, pid) -> (since, start)
    totals = defaultdict(lambda: [mpmath.mpf(0)] * 4)
    rx = re.compile(pod_filter) if pod_filter else None

    def credit(share):
        if share == 0:
            return mpmath.mpf(0)
        return share**g

    def do_poll(p):
        for seen, uid, name, node in tr.pods:
            if seen > p or tr.gone.get(uid, p + 1) <= p:
                continue
            if rx is not None and not rx.search(name):
                continue
            for pid, proc in tr.batch(node, p).items():
                variants = {uid, uid.replace("-", "_")}
                if proc["cgroup"] and any(v in proc["cgroup"] for v in variants) and (node, pid) not in tracked:
                    tracked[(node, pid)] = (p, proc["start"])

    boundary = t0
    do_poll(t0)
    for t, kind in actions:
        if kind == 1:
            do_poll(t)
            continue
        if t <= boundary:
            continue
        a, b = boundary, t
        length = mpmath.mpf(b - a) / US
        for node in tr.nodes:
            prev, cur = tr.batch(node, a), tr.batch(node, b)
            energy = {}
            for key in [k for k in tr.rapl if k[0] == node]:
                ra, rb = tr.reading(key, a), tr.reading(key, b)
                assert rb[0] > a, "oracle assumes fresh readings at every boundary"
                e_tot = mpmath.mpf(tr.unwrap(key[2], ra[1], rb[1])) / US
                e_st = p_static[key] * length
                energy[(key[1], key[2])] = (max(e_tot - e_st, 0), e_st, e_tot)
            # per-socket CPU deltas and rss of every observed process
            d_cpu, rss = {}, {}
            for pid, proc in cur.items():
                old = prev.get(pid)
                if old is not None and not _same(old, proc):
                    old = None
                d_cpu[pid] = {s: v - (old["cpu"].get(s, 0) if old else 0) for s, v in proc["cpu"].items()}
                rss[pid] = proc["rss"]
            t_tot = defaultdict(lambda: mpmath.mpf(0))
            m_tot = defaultdict(lambda: mpmath.mpf(0))
            for pid in cur:
                for s, v in d_cpu[pid].items():
                    t_tot[s] += v
                for s, v in rss[pid].items():
                    m_tot[s] += v

            def rho(pid, s):
                v = d_cpu[pid].get(s, 0)
                return v / t_tot[s] if t_tot[s] > 0 else mpmath.mpf(0)

            def sigma(pid, s):
                v = rss[pid].get(s, 0)
                return v / m_tot[s] if m_tot[s] > 0 else mpmath.mpf(0)

            def alive(key):
                since, start = tracked[key]
                proc = cur.get(key[1])
                if proc is None or proc["start"] != start:
                    return False
                old = prev.get(key[1])
                return old is None or _same(old, proc)

            eligible = [key for key in tracked if key[0] == node and tracked[key][0] <= a and alive(key)]
            for key in sorted(eligible):
                pid = key[1]
                out = totals[key]
                for idx, domain, share in ((0, "package", rho), (2, "dram", sigma)):
                    if domain not in tr.domains:
                        continue
                    for s in range(tr.sockets):
                        e_dyn, e_st, e_tot = energy[(s, domain)]
                        x = share(pid, s)
                        if model == "linear":
                            out[idx] += e_dyn * x
                        elif mode == "conserving":
                            norm = sum(credit(share(q, s)) for q in cur)
                            out[idx] += e_dyn * credit(x) / norm if norm > 0 else 0
                        else:
                            out[idx] += e_dyn * credit(x)
                        out[idx + 1] += e_st * x
            for key in [k for k in tracked if k[0] == node]:
                if not alive(key):
                    del tracked[key]
        boundary = t
    return dict(totals)

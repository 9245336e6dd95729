from memlearn.trace import MemoryAccess


def pc_split_trace(n_loads, n_pcs=8, hot_lines=64, fresh_base=1 << 24):
    """Alternating trace where the off-chip outcome is a deterministic
    function of PC: even slots reuse a tiny resident footprint (on-chip
    after warmup), odd slots touch a never-seen line (always off-chip)."""
    out = []
    fresh = fresh_base
    for i in range(n_loads):
        if i % 2 == 0:
            pc = 0x10000 + 0x40 * ((i // 2) % n_pcs)
            line = (i // 2) % hot_lines
        else:
            pc = 0x20000 + 0x40 * ((i // 2) % n_pcs)
            line = fresh
            fresh += 1
        out.append(MemoryAccess(pc=pc, vaddr=line * 64, cycle=i, kind="load"))
    return out

"""Pure-Python rejection-KMC kernel (fallback for ``_core``).

Consumes the generator's uniforms in exactly the compiled kernel's order.
"""

import math


def run_segment(state, rates, radius, t, t_end, currents, bit_generator, log_buf, log_pos):
    L = len(state)
    log_cap = len(log_buf)
    width = 2 * radius + 2
    rand = bit_generator.random_raw
    scale = 1.0 / 9007199254740992.0
    occ = state.tolist()
    table = rates.tolist()
    cur = currents.tolist()
    proposals = accepted = 0
    while True:
        u = (rand() >> 11) * scale
        t += -math.log(1.0 - u) / L
        if t > t_end:
            t = t_end
            break
        proposals += 1
        x = int(((rand() >> 11) * scale) * L)
        if x >= L:
            x = L - 1
        x1 = x + 1
        if x1 == L:
            x1 = 0
        a = occ[x]
        b = occ[x1]
        if a == b:
            continue
        idx = 0
        for j in range(width):
            idx |= occ[(x - radius + j) % L] << j
        rate = table[idx]
        if rate <= 0.0:
            continue
        if rate < 1.0 and (rand() >> 11) * scale >= rate:
            continue
        occ[x] = b
        occ[x1] = a
        cur[x] += 1 if a == 1 else -1
        accepted += 1
        if log_pos < log_cap:
            log_buf[log_pos] = x
            log_pos += 1
    state[:] = occ
    currents[:] = cur
    return t, proposals, accepted, log_pos

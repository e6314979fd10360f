"""Compiled inner loop of the event-driven simulator.

All state lives in arrays owned by the caller and is mutated in place, so a
chain can be advanced in chunks of pre-drawn uniforms: every event consumes
exactly two uniforms (waiting time, then event choice).
"""

import math

import numpy as np
from numba import njit

ARRIVAL = 0
SERVICE = 1


@njit(cache=True)
def decay_terms(omega, delta):
    """Return ``(exp(-w d), (1 - exp(-w d))/w, (d - (1 - exp(-w d))/w)/w)``."""
    z = omega * delta
    one_minus = -math.expm1(-z)
    if z < 1e-3:
        # z - (1 - e^-z) = z^2/2 - z^3/6 + ...; direct subtraction cancels
        tail = z * z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 24.0 - z / 120.0)))
    else:
        tail = z - one_minus
    return 1.0 - one_minus, one_minus / omega, tail / (omega * omega)


@njit(cache=True)
def total_rate(lengths, gamma, mu):
    r = 0.0
    for j in range(gamma.size):
        r += gamma[j]
    for i in range(mu.size):
        if lengths[i] > 0:
            r += mu[i]
    return r


@njit(cache=True)
def pick_event(v, rate, lengths, gamma, mu, route_cum):
    """Choose the next event from one uniform ``v`` in [0, 1).

    Returns ``(kind, source, dest)``: an arrival to ``dest`` from outside
    (``source = -1``), or a service completion at ``source`` routed to
    ``dest`` (``dest = -1`` means the customer leaves the network).
    """
    n = mu.size
    target = v * rate
    last_kind, last_src = ARRIVAL, -1
    last_j = 0
    for j in range(n):
        if gamma[j] > 0.0:
            last_kind, last_j = ARRIVAL, j
            if target < gamma[j]:
                return ARRIVAL, -1, j
            target -= gamma[j]
    for i in range(n):
        if lengths[i] > 0:
            last_kind, last_src = SERVICE, i
            if target < mu[i]:
                f = target / mu[i]
                for j in range(n):
                    if f < route_cum[i, j]:
                        return SERVICE, i, j
                return SERVICE, i, -1
            target -= mu[i]
    # round-off pushed target past the last channel
    if last_kind == ARRIVAL:
        return ARRIVAL, -1, last_j
    return SERVICE, last_src, -1


@njit(cache=True)
def _measure_piece(delta, sub, lengths, B, omegas, pair_a, pair_b,
                   integ, busy_time, level_time):
    n = lengths.size
    n_hist = level_time.shape[2]
    for i in range(n):
        if lengths[i] > 0:
            busy_time[sub, i] += delta
        lev = lengths[i]
        if lev >= n_hist:
            lev = n_hist - 1
        level_time[sub, i, lev] += delta
    for k in range(omegas.size):
        _, e1, e2 = decay_terms(omegas[k], delta)
        for p in range(pair_a.size):
            if lengths[pair_a[p]] > 0:
                inc = B[pair_b[p], k] * e1
                if lengths[pair_b[p]] > 0:
                    inc += e2
                integ[sub, p, k] += inc


@njit(cache=True)
def _decay(delta, lengths, B, omegas):
    for k in range(omegas.size):
        e0, e1, _ = decay_terms(omegas[k], delta)
        for i in range(lengths.size):
            b = 1.0 if lengths[i] > 0 else 0.0
            B[i, k] = e0 * B[i, k] + e1 * b


@njit(cache=True)
def hold(t0, t1, t_warm, sub_len, n_sub, lengths, B, omegas, pair_a, pair_b,
         integ, busy_time, level_time):
    """Account for the interval [t0, t1) during which nothing changes."""
    t = t0
    while t < t1:
        if t < t_warm:
            stop = min(t1, t_warm)
            sub = -1
        else:
            sub = int((t - t_warm) / sub_len)
            if sub >= n_sub:
                sub = n_sub - 1
            stop = min(t1, t_warm + (sub + 1) * sub_len)
            if stop <= t:
                # boundary lost to round-off; move to the next sub-run
                sub = min(sub + 1, n_sub - 1)
                stop = min(t1, t_warm + (sub + 1) * sub_len)
        delta = stop - t
        if delta <= 0.0:
            break
        if sub >= 0:
            _measure_piece(delta, sub, lengths, B, omegas, pair_a, pair_b,
                           integ, busy_time, level_time)
        _decay(delta, lengths, B, omegas)
        t = stop


@njit(cache=True)
def advance(clock, lengths, B, uniforms, t_warm, sub_len, n_sub,
            mu, gamma, route_cum, omegas, pair_a, pair_b,
            integ, busy_time, level_time, arrivals, departures, routed,
            bp_start, bp_out):
    """Run events until the chain ends or the uniforms run out.

    ``clock`` is a length-1 array.  Returns ``(consumed, n_busy_periods,
    finished)``; completed busy periods are written to ``bp_out`` rows
    ``(queue, duration, sub_run)``.
    """
    t_end = t_warm + n_sub * sub_len
    pos = 0
    n_bp = 0
    n = mu.size
    while pos + 2 <= uniforms.size:
        t = clock[0]
        rate = total_rate(lengths, gamma, mu)
        if rate <= 0.0:
            hold(t, t_end, t_warm, sub_len, n_sub, lengths, B, omegas,
                 pair_a, pair_b, integ, busy_time, level_time)
            clock[0] = t_end
            return pos, n_bp, True
        dt = -math.log(1.0 - uniforms[pos]) / rate
        t_next = t + dt
        if t_next >= t_end:
            hold(t, t_end, t_warm, sub_len, n_sub, lengths, B, omegas,
                 pair_a, pair_b, integ, busy_time, level_time)
            clock[0] = t_end
            return pos + 2, n_bp, True
        hold(t, t_next, t_warm, sub_len, n_sub, lengths, B, omegas,
             pair_a, pair_b, integ, busy_time, level_time)
        kind, src, dst = pick_event(uniforms[pos + 1], rate, lengths, gamma, mu, route_cum)
        pos += 2
        clock[0] = t_next
        measured = t_next >= t_warm
        sub = 0
        if measured:
            sub = min(int((t_next - t_warm) / sub_len), n_sub - 1)
        if kind == SERVICE and dst == src:
            # rejoining the same queue leaves the occupancy unchanged
            if measured:
                departures[sub, src] += 1
                routed[sub, src, src] += 1
                arrivals[sub, src] += 1
            continue
        if kind == SERVICE:
            lengths[src] -= 1
            if measured:
                departures[sub, src] += 1
                routed[sub, src, dst if dst >= 0 else n] += 1
            if lengths[src] == 0:
                start = bp_start[src]
                if measured and not math.isnan(start):
                    bp_out[n_bp, 0] = src
                    bp_out[n_bp, 1] = t_next - start
                    bp_out[n_bp, 2] = sub
                    n_bp += 1
                bp_start[src] = np.nan
        if dst >= 0:
            lengths[dst] += 1
            if measured:
                arrivals[sub, dst] += 1
            if lengths[dst] == 1:
                bp_start[dst] = t_next
    return pos, n_bp, False

"""Independent reference computations used to freeze expected values.

These deliberately avoid the package's own numerics: sums and integrals go
through mpmath at high precision.
"""

import mpmath as mp

mp.mp.dps = 30


def mean_rounded_exponential(rate, dt):
    """E[ceil(T/dt) * dt] for T ~ Exp(rate), by direct quadrature of the step function."""
    rate, dt = mp.mpf(rate), mp.mpf(dt)
    t_max = 60 / rate
    n = int(mp.ceil(t_max / dt))
    pts = [k * dt for k in range(n + 1)]
    return float(mp.quad(lambda t: rate * mp.e ** (-rate * t) * mp.ceil(t / dt) * dt, pts))


def ray_integral(x0, omega, v, sigma_a, region_x, value, domain_x=(-mp.inf, mp.inf), sense=1):
    """Integral over t of value * 1[x(t) in region] * exp(-sigma_a v t) until the ray leaves the domain."""
    vel = mp.mpf(sense) * v * omega
    if vel > 0:
        t_end = (domain_x[1] - x0) / vel
    else:
        t_end = (domain_x[0] - x0) / vel
    ta = (mp.mpf(region_x[0]) - x0) / vel
    tb = (mp.mpf(region_x[1]) - x0) / vel
    lo, hi = max(min(ta, tb), 0), min(max(ta, tb), t_end)
    if hi <= lo:
        return 0.0
    return float(mp.quad(lambda t: value * mp.e ** (-sigma_a * v * t), [lo, hi]))


def discrete_ray_sum(x0, omega, v, dt, sigma_a, region_x, value, domain_x, sense=1, max_steps=10 ** 7):
    """Right-endpoint Riemann sum the discrete-time stepper should reproduce."""
    total = mp.mpf(0)
    x0 = mp.mpf(x0)
    step = mp.mpf(sense) * v * omega * dt
    for j in range(1, max_steps + 1):
        x = x0 + j * step
        if x < domain_x[0] or x > domain_x[1]:
            break
        if region_x[0] <= x <= region_x[1]:
            total += value * mp.e ** (-sigma_a * v * j * dt) * dt
    return float(total)

#!/usr/bin/env python3
"""Regenerates accountant_oracle.json.

Independent reference calculator for the privacy-arithmetic formulas, kept in
a different language on purpose: the Rust implementation must agree with
these frozen values to 1e-12 relative error. Run from this directory:

    python3 generate_oracle.py > accountant_oracle.json
"""

import json
import math
import random

rng = random.Random(0x5EED)

TUPLES = 100


def strong_compose():
    cases = []
    for _ in range(TUPLES):
        eps = rng.uniform(0.001, 2.0)
        delta = rng.uniform(0.0, 1e-5)
        k = rng.randint(1, 100_000)
        slack = 10.0 ** rng.uniform(-12, -2)
        eps_total = k * eps * math.expm1(eps) + eps * math.sqrt(2 * k * math.log(1 / slack))
        delta_total = min(k * delta + slack, 1.0)
        cases.append(
            {
                "eps": eps,
                "delta": delta,
                "steps": k,
                "slack": slack,
                "eps_total": eps_total,
                "delta_total": delta_total,
            }
        )
    return cases


def amplify():
    cases = []
    for _ in range(TUPLES):
        eps = rng.uniform(0.0, 1.0)
        delta = rng.uniform(0.0, 1e-4)
        gamma = rng.uniform(1e-6, 1.0)
        cases.append(
            {
                "eps": eps,
                "delta": delta,
                "gamma": gamma,
                "eps_out": gamma * eps,
                "delta_out": gamma * delta,
            }
        )
    return cases


def erm_step():
    cases = []
    while len(cases) < TUPLES:
        eps = rng.uniform(0.01, 8.0)
        delta = 10.0 ** rng.uniform(-9, -3)
        t = rng.randint(1, 1_000_000)
        m = rng.randint(1, 1000)
        if m * m > 100 * t:
            continue
        eps_step = eps * m / (2 * math.sqrt(2 * t * math.log(2 / delta)))
        delta_step = delta * m / (2 * t)
        if delta_step >= 1.0:
            continue
        cases.append(
            {
                "eps": eps,
                "delta": delta,
                "steps": t,
                "groups": m,
                "eps_step": eps_step,
                "delta_step": delta_step,
            }
        )
    return cases


def sgd_total():
    cases = []
    while len(cases) < TUPLES:
        b = rng.randint(1, 512)
        n = rng.randint(b * 50, b * 100_000)
        t = rng.randint(10, 200_000)
        delta_step = 10.0 ** rng.uniform(-12, -7)
        sigma = rng.uniform(0.3, 20.0)
        eps_sel = rng.uniform(0.0, 2.0)
        eps_gauss = 2 * math.sqrt(2 * math.log(1.25 / delta_step)) / sigma
        per_step = b / n * (eps_sel + eps_gauss)
        if per_step > 1 / math.sqrt(t):
            continue
        log_arg = n / (2 * b * t * delta_step)
        if log_arg <= math.e:
            continue
        eps_total = 4 * b * math.sqrt(t * math.log(log_arg)) / n * (eps_sel + eps_gauss)
        delta_total = 4 * b * t * delta_step / n
        cases.append(
            {
                "eps_sel": eps_sel,
                "delta_step": delta_step,
                "sigma": sigma,
                "batch": b,
                "samples": n,
                "steps": t,
                "eps_total": eps_total,
                "delta_total": delta_total,
            }
        )
    return cases


def scan_alpha():
    cases = []
    for _ in range(TUPLES):
        s = rng.uniform(1e-4, 10.0)
        p = rng.randint(2, 10_000_000)
        c1 = rng.randint(1, 200)
        beta = rng.uniform(1e-4, 0.5)
        eps = rng.uniform(0.01, 10.0)
        delta = 10.0 ** rng.uniform(-10, -3)
        alpha = (
            20
            * s
            * (math.log(p) + math.log(4 * c1 / beta))
            * math.sqrt(c1 * math.log(2 / delta))
            / eps
        )
        cases.append(
            {
                "s": s,
                "p": p,
                "c1": c1,
                "beta": beta,
                "eps": eps,
                "delta": delta,
                "alpha": alpha,
            }
        )
    return cases


print(
    json.dumps(
        {
            "strong_compose": strong_compose(),
            "amplify": amplify(),
            "erm_step": erm_step(),
            "sgd_total": sgd_total(),
            "scan_alpha": scan_alpha(),
        },
        indent=1,
    )
)

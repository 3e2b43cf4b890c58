#!/usr/bin/env python3
"""Print eps_{n,delta} for the l1 column at a few noise levels"""

from src.pertloss import RateQuery, rate
from src.pertloss.errors import InvalidCombinationError

problems = ['mle_expfam', 'glm_fixed', 'nonparam_regression']
sigma_etas = [0.0, 0.5, 1.0, 2.0]
ns = [100, 1000, 10000]

print(f"{'Problem':<22} {'sigma_eta':<10} " + "".join(f"{'n=' + str(n):<12}" for n in ns))
print("=" * 70)

for problem in problems:
    for sigma_eta in sigma_etas:
        cells = []
        for n in ns:
            try:
                value = rate(RateQuery(problem_kind=problem, sigma_eta=sigma_eta, n=n, p=10))
                cells.append(f"{value:<12.4f}")
            except InvalidCombinationError:
                cells.append(f"{'NA':<12}")
        print(f"{problem:<22} {sigma_eta:<10} " + "".join(cells))

"""Sweep the matching discount on the 3-state toy MDP.

The expert data come from theta = 0.6 episodes truncated at length 3.
Matching the empirical state-action frequencies only recovers theta = 0.6
at one particular discount; everywhere else the minimizer drifts.
"""

import numpy as np

from tabdice.toy import toy_critical_gamma, toy_kl, toy_optimal_theta

gammas = np.concatenate([np.linspace(0.05, 0.95, 19), [toy_critical_gamma()]])
gammas = np.unique(np.round(gammas, 10))

print("gamma    theta*     kl(theta*)   |theta* - 0.6|")
for gamma in gammas:
    theta = toy_optimal_theta(gamma)
    tag = "  <- critical" if abs(gamma - toy_critical_gamma()) < 1e-12 else ""
    print(f"{gamma:.3f}   {theta:.6f}   {toy_kl(theta, gamma):.6f}     {abs(theta - 0.6):.6f}{tag}")

print()
print(f"critical discount: {toy_critical_gamma()}")
print("the minimizer equals the data-generating parameter only there;")
print("the residual KL stays positive because a finite-length empirical")
print("distribution is not an exact discounted visitation of any policy.")

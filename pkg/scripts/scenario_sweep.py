"""Sweep the gap to the approaching car in the blocked-driver scenario.

Prints t_c, p_hat, w(p_hat), e_ck and the decision as the gap grows,
showing where the reference driver switches from keeping to changing.
"""
import numpy as np

from saferl.regret import REFERENCE_DRIVER, LaneChangeObservation, net_advantage


def main():
    print(f"{'d [m]':>6} {'t_c':>7} {'p_hat':>7} {'w':>8} {'e_ck':>9}  decision")
    for d in np.arange(0.0, 32.0, 2.0):
        tr = net_advantage(LaneChangeObservation(v_s=5.56, v_c=5.56, v_f=12.5, v_b=12.5, d=float(d)), REFERENCE_DRIVER)
        print(f"{d:6.1f} {tr.t_c:7.3f} {tr.p_hat:7.3f} {tr.w_val:8.4f} {tr.e_ck:9.4f}  {tr.decision.name}")


if __name__ == "__main__":
    main()

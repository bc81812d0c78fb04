"""Empirical error vs the two closed-form convergence bounds."""
import time

from sgcsim.experiments import l2_bound_check, strongly_convex_bound_check


def main():
    t0 = time.perf_counter()
    c = l2_bound_check()
    print(f"l2 bound (consistent system): T={c.T} mean ||b_T-b*||^2={c.mean_sq_error:.4e} "
          f"+- {c.std_err:.1e}  bound={c.bound:.4e}  holds={c.holds}")
    for c in strongly_convex_bound_check():
        print(f"strongly convex bound: T={c.T:5d} mean={c.mean_sq_error:.4e} T*mean={c.T * c.mean_sq_error:.4e} "
              f"bound={c.bound:.4e}")
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

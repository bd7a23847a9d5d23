#!/usr/bin/env python3
"""End-to-end finite-difference gradient check of the forecasting model."""

import argparse
import time

from causalnet.cli import run_model_gradcheck


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--airports", type=int, default=3)
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--emb-dim", type=int, default=4)
    ap.add_argument("--enc-steps", type=int, default=2)
    ap.add_argument("--dec-steps", type=int, default=2)
    ap.add_argument("--hops", type=int, default=2)
    ap.add_argument("--eps", type=float, default=1e-5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.monotonic()
    res = run_model_gradcheck(
        n_airports=args.airports,
        hidden=args.hidden,
        emb_dim=args.emb_dim,
        enc_steps=args.enc_steps,
        dec_steps=args.dec_steps,
        hops=args.hops,
        eps=args.eps,
        seed=args.seed,
    )
    print(
        f"max_rel_err={res.max_rel_err:.3e} checked={res.checked} "
        f"excluded={res.excluded} elapsed={time.monotonic() - t0:.1f}s"
    )


if __name__ == "__main__":
    main()

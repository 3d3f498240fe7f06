"""How pruning shrinks a one-model-per-point start and what each removal costs.

Starts from w_gen = 1 (a model at every input) on sine data and logs every
sweep that removed models: model counts before and after and the relative
change of held-out MSE caused by the removal alone.
"""

import argparse

from lgr import data
from lgr.model import FitConfig, fit


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--prune-threshold", type=float, default=1e3)
    args = p.parse_args(argv)

    train = data.gen_sine(args.n, seed=args.seed)
    test = data.gen_sine(1000, seed=args.seed + 1000)
    events = []

    def on_prune(before, after, n_seen):
        mb = data.mse(before.predict_batch(test.inputs)[0], test.targets)
        ma = data.mse(after.predict_batch(test.inputs)[0], test.targets)
        events.append((n_seen, before.n_models, after.n_models, (ma - mb) / mb))

    model, _ = fit(train, FitConfig(w_gen=1.0, prune_threshold=args.prune_threshold), on_prune=on_prune)
    print("n_seen  before  after  rel_mse_change")
    for e in events:
        print(f"{e[0]:6d}  {e[1]:6d}  {e[2]:5d}  {e[3]:+.5f}")
    worst = max(abs(e[3]) for e in events) if events else 0.0
    print(f"final models {model.n_models} of {args.n} points; worst single-removal change {worst:.4%}")


if __name__ == "__main__":
    main()

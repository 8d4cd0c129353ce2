"""Invert the light schedule mid-run and report how many cycles each pathway needs to re-entrain."""

import argparse
from dataclasses import replace
from pathlib import Path

from phytosim.analysis import baseline_correct, diel_metrics, entrainment_lag, label_cycle
from phytosim.plotting import plot_run
from phytosim.podsim import Inversion, make_scenario, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/entrainment")
    ap.add_argument("--days", type=float, default=7.0)
    ap.add_argument("--inversion-day", type=int, default=3, help="lights stay on through this night")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inv = Inversion(args.inversion_day * 86400 + 22 * 3600, 22.0, 10.0)

    for pathway in ("c3", "cam"):
        sc = make_scenario("env1", pathway, duration=args.days)
        sc = replace(sc, schedule=replace(sc.schedule, inversion_events=(inv,)))
        r = simulate(sc)
        corrected = baseline_correct(r.plant, r.control)
        metrics = diel_metrics(corrected, sc.schedule)
        lag = entrainment_lag(corrected, sc.schedule)
        labels = [label_cycle(m).value for m in metrics]
        print(f"{pathway}: lag {lag} cycle(s); labels {' '.join(labels)}")
        plot_run(out / f"{pathway}.svg", {"corrected": corrected}, sc.schedule,
                 title=f"{pathway}, inversion, lag {lag}",
                 cycle_labels=[(m.start, m.end, lab) for m, lab in zip(metrics, labels)])


if __name__ == "__main__":
    main()

"""Command-line entry point: ``mpprl {gen,link,eval,attack,bench}``.

Configuration is an INI file (sections ``bloom``, ``protocol``, ``gen``,
``bench``); command-line flags override it. Set ``MPPRL_LOG_LEVEL`` to
control logging verbosity.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path


from . import datagen, evaluation
from .baseline import lai_link
from .bloom import BloomParams
from .datagen import FIELDS, GenSpec
from .protocol import LinkageError, ProtocolConfig, run_linkage
from .securesum import ProtocolError

log = logging.getLogger("mpprl")

DEFAULTS = {
    "bloom": {"l": "500", "k": "20", "q": "2", "pad_segments": "yes",
              "hash_key_1": "mpprl-shared-secret-one", "hash_key_2": "mpprl-shared-secret-two"},
    "protocol": {"mode": "mpam", "threshold": "0.8", "seg_threshold": "0.8",
                 "qid_attrs": ",".join(FIELDS), "blocking_attrs": "surname",
                 "seed": "42", "rotate_initiator": "no", "threads": "no"},
    "gen": {"parties": "3", "records": "1000", "overlap": "0.5", "corruption": "0.0",
            "max_ops": "3", "corrupt_mode": "record"},
    "bench": {"parties": "3,5,7", "sizes": "500,1000", "modes": "mpam,mpam-f,lai",
              "corruption": "0.2"},
}


def load_config(path=None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cfg.read_dict(DEFAULTS)
    if path:
        if not cfg.read(path):
            raise FileNotFoundError(f"cannot read config file {path}")
    return cfg


def _apply_overrides(cfg, args):
    pairs = [("mode", "protocol", "mode"), ("threshold", "protocol", "threshold"),
             ("seg_threshold", "protocol", "seg_threshold"), ("seed", "protocol", "seed"),
             ("parties", "gen", "parties")]
    for attr, section, key in pairs:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[section][key] = str(value)
    return cfg


def _list(value):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def bloom_params(cfg, parties) -> BloomParams:
    b = cfg["bloom"]
    return BloomParams(l=b.getint("l"), k=b.getint("k"), q=b.getint("q"), parties=parties,
                       hash_key_1=b["hash_key_1"].encode(), hash_key_2=b["hash_key_2"].encode(),
                       pad_segments=b.getboolean("pad_segments"))


def protocol_config(cfg, parties, mode=None) -> ProtocolConfig:
    p = cfg["protocol"]
    mode = mode or p["mode"]
    return ProtocolConfig(
        params=bloom_params(cfg, parties),
        s_t=p.getfloat("threshold"),
        s_m=p.getfloat("seg_threshold") if mode == "mpam-f" else None,
        qid_attrs=_list(p["qid_attrs"]),
        blocking_attrs=_list(p["blocking_attrs"]),
        seed=p.getint("seed"),
        rotate_initiator=p.getboolean("rotate_initiator"),
        threads=p.getboolean("threads"),
    )


def gen_spec(cfg) -> GenSpec:
    g = cfg["gen"]
    return GenSpec(parties=g.getint("parties"), n_records=g.getint("records"),
                   overlap=g.getfloat("overlap"), corrupt_fraction=g.getfloat("corruption"),
                   max_ops=g.getint("max_ops"), corrupt_mode=g["corrupt_mode"],
                   seed=cfg["protocol"].getint("seed"))


def _party_files(paths):
    if len(paths) == 1 and Path(paths[0]).is_dir():
        found = sorted(Path(paths[0]).glob("party_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        if not found:
            raise FileNotFoundError(f"no party_*.csv files in {paths[0]}")
        return found
    return [Path(p) for p in paths]


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".part")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def link(databases, cfg, mode):
    """Run one linkage mode; returns ``(predicted rid tuples, rows, report)``."""
    parties = len(databases)
    config = protocol_config(cfg, parties, mode)
    if mode == "lai":
        res = lai_link(databases, config.params, config.qid_attrs, config.blocking_attrs,
                       seed=config.seed)
        rows = [(t, None, None) for t in sorted(res.tuples)]
        return res.tuples, rows, res.report
    out = run_linkage(databases, config)
    rows = [(m.rids, tuple(p.hex() for p in m.candidate[1]), m.dice) for m in out.matches]
    return out.match_rids(), rows, out.report


def cmd_gen(args, cfg):
    spec = gen_spec(cfg)
    if args.records is not None:
        spec.n_records = args.records
    if args.corruption is not None:
        spec.corrupt_fraction = args.corruption
    data = datagen.generate(spec)
    out_dir = Path(args.out_dir)
    paths = datagen.write_dataset(data, out_dir)
    print(f"wrote {len(paths)} party files and truth.csv to {out_dir} "
          f"({spec.n_records} records per party, {len(data.truth)} true matches)")


def cmd_link(args, cfg):
    files = _party_files(args.data)
    databases = [datagen.read_records(f) for f in files]
    mode = cfg["protocol"]["mode"]
    if mode not in ("mpam", "mpam-f", "lai"):
        raise ValueError(f"unknown mode {mode!r}")
    truth = datagen.read_truth(args.truth) if args.truth else None
    predicted, rows, report = link(databases, cfg, mode)

    out_dir = Path(args.out_dir)
    lines = []
    header = [f"party_{j + 1}" for j in range(len(databases))] + ["dice"]
    lines.append(",".join(header))
    for rids, pseudos, dice in rows:
        ids = rids if (truth is not None or pseudos is None) else pseudos
        lines.append(",".join([*ids, "" if dice is None else f"{dice:.6f}"]))
    body = {"report": report.to_dict()}
    text = report.to_text()
    if truth is not None:
        q = evaluation.quality(predicted, truth)
        body["quality"] = q.__dict__
        text += f"precision={q.precision:.6f}\nrecall={q.recall:.6f}\nf1={q.f1:.6f}\n"
    _write_text(out_dir / "matches.csv", "\n".join(lines) + "\n")
    _write_text(out_dir / "report.txt", text)
    _write_text(out_dir / "report.json", json.dumps(body, indent=2, sort_keys=True))
    sys.stdout.write(text)


def cmd_eval(args, cfg):
    with open(args.matches, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for h in header if h.startswith("party_"))
        predicted = {tuple(row[:n]) for row in reader}
    truth = datagen.read_truth(args.truth)
    q = evaluation.quality(predicted, truth)
    text = (f"predicted={len(predicted)}\ntrue={len(truth)}\n"
            f"precision={q.precision:.6f}\nrecall={q.recall:.6f}\nf1={q.f1:.6f}\n")
    if args.out_dir:
        _write_text(Path(args.out_dir) / "quality.txt", text)
    sys.stdout.write(text)


def cmd_attack(args, cfg):
    files = _party_files(args.data)
    databases = [datagen.read_records(f) for f in files]
    config = protocol_config(cfg, len(databases))
    values = [[r.values(config.qid_attrs) for r in db] for db in databases]
    risks = evaluation.attack_all_positions(values, config.params)
    out_dir = Path(args.out_dir)
    lines = []
    for i, r in enumerate(risks):
        lines.append(f"position_{i + 1}.dr_mean={r.dr_mean:.6f}")
        lines.append(f"position_{i + 1}.dr_marketer={r.dr_marketer:.6f}")
    dr_mean, dr_mark = evaluation.mean_risk(risks)
    lines += [f"dr_mean={dr_mean:.6f}", f"dr_marketer={dr_mark:.6f}"]
    for j, vals in enumerate(values):
        profile = evaluation.sensitivity_profile(vals, config.params)
        out_dir.mkdir(parents=True, exist_ok=True)
        profile.to_csv(out_dir / f"sensitivity_party_{j + 1}.csv")
        lines.append(f"party_{j + 1}.max_sensitivity={profile.sensitivity.max():.6f}")
    text = "\n".join(lines) + "\n"
    _write_text(out_dir / "attack.txt", text)
    sys.stdout.write(text)


BENCH_COLUMNS = ["mode", "parties", "records", "runtime_ms", "max_rss_kb", "candidates",
                 "candidates_after_filter", "rr_f", "precision", "recall", "f1"]


def run_bench(cfg, parties_list, sizes, modes, corruption):
    rows = []
    for p in parties_list:
        for n in sizes:
            spec = replace(gen_spec(cfg), parties=p, n_records=n, corrupt_fraction=corruption)
            data = datagen.generate(spec)
            for mode in modes:
                start = time.perf_counter()
                predicted, _, report = link(data.databases, cfg, mode)
                elapsed = 1000 * (time.perf_counter() - start)
                q = evaluation.quality(predicted, data.truth)
                rr_f = (evaluation.reduction_ratio_filter(report.candidates_total,
                                                          report.candidates_after_filter)
                        if mode == "mpam-f" and report.candidates_total else 0.0)
                rss = max(report.max_rss_kb_per_step.values(), default=0)
                rows.append([mode, p, n, round(elapsed, 1), rss, report.candidates_total,
                             report.candidates_after_filter, round(rr_f, 6),
                             round(q.precision, 6), round(q.recall, 6), round(q.f1, 6)])
                log.info("bench %s P=%d N=%d: %.0f ms, F1 %.3f", mode, p, n, elapsed, q.f1)
    return rows


def cmd_bench(args, cfg):
    b = cfg["bench"]
    parties = [int(v) for v in _list(b["parties"])]
    if args.parties is not None:
        parties = [args.parties]
    rows = run_bench(cfg, parties, [int(v) for v in _list(b["sizes"])], _list(b["modes"]),
                     b.getfloat("corruption"))
    lines = [",".join(BENCH_COLUMNS)] + [",".join(map(str, r)) for r in rows]
    text = "\n".join(lines) + "\n"
    _write_text(Path(args.out_dir) / "bench.csv", text)
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--mode", choices=["mpam", "mpam-f", "lai"])
    common.add_argument("--parties", type=int)
    common.add_argument("--threshold", type=float, help="match threshold s_t")
    common.add_argument("--seg-threshold", dest="seg_threshold", type=float,
                        help="segment filter threshold s_m (mpam-f)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir", default="out")

    parser = argparse.ArgumentParser(prog="mpprl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic multi-party dataset")
    p.add_argument("--records", type=int)
    p.add_argument("--corruption", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("link", parents=[common], help="link party files")
    p.add_argument("data", nargs="+", help="party CSV files or a directory of party_*.csv")
    p.add_argument("--truth", help="truth.csv; report quality and write true rids")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", parents=[common], help="score a matches CSV against truth")
    p.add_argument("matches")
    p.add_argument("truth")
    p.set_defaults(func=cmd_eval, out_dir=None)

    p = sub.add_parser("attack", parents=[common], help="frequency attack and bit sensitivity")
    p.add_argument("data", nargs="+")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", parents=[common], help="runtime/quality grid over parties and sizes")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MPPRL_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        args.func(args, cfg)
    except (LinkageError, ProtocolError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

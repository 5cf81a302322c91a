"""Command line front end: qmonitor-plot <spec file> or flags.

A spec file is an INI with one [plot] section holding the same keys
the flags set; flags override the file.  Exit codes: 0 on success, 2
for any spec, schema, or data problem.
"""

import argparse
import configparser
import sys
from pathlib import Path

import matplotlib.pyplot as plt

from .core import KINDS, PlotSpec, render
from .errors import PlotsError, SpecError

_SPEC_KEYS = ("kind", "input", "output", "manifest", "x_range", "y_range",
              "t_split", "title")


def _load_spec_file(path: Path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not path.is_file():
        raise SpecError(f"spec file not found: {path}")
    parser.read(path)
    if "plot" not in parser:
        raise SpecError("spec file needs a [plot] section")
    section = parser["plot"]
    unknown = sorted(set(section) - set(_SPEC_KEYS))
    if unknown:
        raise SpecError("unknown key(s) in [plot]: "
                        + ", ".join(f"'{k}'" for k in unknown))
    return dict(section)


def _split_pair(raw, name):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise SpecError(f"{name} expects 'low,high', got {raw!r}")
    return tuple(parts)


def _build_spec(args) -> PlotSpec:
    values = _load_spec_file(Path(args.spec)) if args.spec else {}
    if args.kind:
        values["kind"] = args.kind
    if args.input:
        values["input"] = ",".join(args.input)
    if args.output:
        values["output"] = args.output
    if args.manifest:
        values["manifest"] = args.manifest
    if args.x_range:
        values["x_range"] = args.x_range
    if args.y_range:
        values["y_range"] = args.y_range
    if args.t_split is not None:
        values["t_split"] = str(args.t_split)
    if args.title:
        values["title"] = args.title

    for key in ("kind", "input", "output"):
        if not values.get(key):
            raise SpecError(f"missing required key '{key}' "
                            "(set it in [plot] or pass the flag)")
    inputs = tuple(p.strip() for p in values["input"].split(",") if p.strip())
    t_split = None
    if values.get("t_split"):
        try:
            t_split = float(values["t_split"])
        except ValueError:
            raise SpecError("t_split must be a number, got "
                            f"{values['t_split']!r}") from None
    return PlotSpec(
        kind=values["kind"],
        inputs=inputs,
        output=Path(values["output"]),
        manifest=Path(values["manifest"]) if values.get("manifest") else None,
        x_range=(_split_pair(values["x_range"], "x_range")
                 if values.get("x_range") else None),
        y_range=(_split_pair(values["y_range"], "y_range")
                 if values.get("y_range") else None),
        t_split=t_split,
        title=values.get("title") or None,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmonitor-plot",
        description="render figures from simulation run CSVs and manifests")
    parser.add_argument("spec", nargs="?", default=None,
                        help="INI spec file with a [plot] section")
    parser.add_argument("--kind", choices=KINDS, default=None)
    parser.add_argument("--input", action="append", metavar="CSV",
                        help="input CSV (repeat for overlaid sweeps)")
    parser.add_argument("--output", default=None,
                        help="image path ending in .png or .svg")
    parser.add_argument("--manifest", default=None,
                        help="run manifest for closed-form overlays")
    parser.add_argument("--x-range", dest="x_range", default=None,
                        metavar="LO,HI")
    parser.add_argument("--y-range", dest="y_range", default=None,
                        metavar="LO,HI")
    parser.add_argument("--t-split", dest="t_split", type=float, default=None,
                        help="end of the trajectory zoom panel")
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = _build_spec(args)
        fig = render(spec)
        plt.close(fig)
    except PlotsError as err:
        print(f"plot error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {spec.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

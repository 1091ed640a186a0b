"""figures <recipe.json> --out <png/svg> [--data-root DIR]

A recipe names the figure kind, its input files and the annotation
block. Input paths resolve against --data-root (default: the recipe's
directory), and every referenced input must exist and parse under the
simulation package's documented schemas.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .readers import SchemaError
from .render import RENDERERS


class RecipeError(ValueError):
    pass


def load_recipe(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RecipeError(f"recipe not found: {path}")
    try:
        recipe = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("figure", "kind", "inputs"):
        if key not in recipe:
            raise RecipeError(f"{path}: recipe key {key!r} missing")
    if recipe["kind"] not in RENDERERS:
        raise RecipeError(f"{path}: unknown figure kind {recipe['kind']!r}; "
                          f"known: {sorted(RENDERERS)}")
    return recipe


def render_recipe(recipe_path, out_path, data_root=None) -> None:
    recipe = load_recipe(recipe_path)
    root = Path(data_root) if data_root else Path(recipe_path).parent
    renderer, required = RENDERERS[recipe["kind"]]
    inputs = {}
    for name in required:
        if name not in recipe["inputs"]:
            raise RecipeError(f"{recipe_path}: input {name!r} missing from recipe")
        candidate = Path(recipe["inputs"][name])
        inputs[name] = candidate if candidate.is_absolute() else root / candidate
        if not inputs[name].exists():
            raise SchemaError(f"{recipe['figure']}: input file missing: {inputs[name]}")
    renderer(inputs, recipe.get("annotations", {}), out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures", description="Render a publication-style figure from "
                                    "simulation output files")
    parser.add_argument("recipe", help="recipe JSON path")
    parser.add_argument("--out", required=True, help="output image path (png/svg)")
    parser.add_argument("--data-root", help="directory the recipe's relative "
                                            "input paths resolve against")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        render_recipe(args.recipe, args.out, args.data_root)
    except (RecipeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

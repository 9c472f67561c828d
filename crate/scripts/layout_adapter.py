#!/usr/bin/env python3
"""Convert layout-analysis output into tablescope block JSON.

The layout/OCR tool is an external program. Either run it yourself and pass
its per-page JSON files, or give --command and the adapter runs it once per
input, substituting {input} and {outdir}; the tool must leave one JSON file
per page in {outdir}.

Per-page input (the common shape of PP-Structure, LayoutParser and DocLayNet
exports after a trivial jq):

    {"page": 0, "width": 1240, "height": 1754,
     "regions": [{"type": "table", "bbox": [x0, y0, x1, y1], "text": "..."}]}

Region labels are mapped onto Text, List, Table, Title and Figure; anything
unmapped is dropped with a warning. Pipe the result through
`tablescope ingest` to validate and canonicalize it.
"""

import argparse
import json
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path

LABELS = {
    "text": "Text",
    "paragraph": "Text",
    "plain text": "Text",
    "caption": "Text",
    "footnote": "Text",
    "table_caption": "Text",
    "figure_caption": "Text",
    "list": "List",
    "list-item": "List",
    "list_item": "List",
    "table": "Table",
    "title": "Title",
    "section-header": "Title",
    "section_header": "Title",
    "header": "Title",
    "figure": "Figure",
    "picture": "Figure",
    "image": "Figure",
}


def load_pages(paths):
    pages = []
    for path in sorted(paths):
        with open(path, encoding="utf-8") as f:
            pages.append(json.load(f))
    return sorted(pages, key=lambda p: p["page"])


def clamp_bbox(bbox, width, height):
    x0, y0, x1, y1 = (float(v) for v in bbox)
    x0, x1 = sorted((max(0.0, min(x0, width)), max(0.0, min(x1, width))))
    y0, y1 = sorted((max(0.0, min(y0, height)), max(0.0, min(y1, height))))
    return [x0, y0, x1, y1]


def to_document(doc_id, source, pages):
    out_pages = []
    dropped = {}
    for new_id, page in enumerate(pages):
        width, height = float(page["width"]), float(page["height"])
        blocks = []
        for i, region in enumerate(page.get("regions", [])):
            label = str(region.get("type", "")).strip().lower()
            kind = LABELS.get(label)
            if kind is None:
                dropped[label] = dropped.get(label, 0) + 1
                continue
            text = "" if kind == "Figure" else str(region.get("text") or "")
            blocks.append({
                "block_id": f"p{new_id}-b{i:03d}",
                "type": kind,
                "bbox": clamp_bbox(region["bbox"], width, height),
                "text": text,
            })
        out_pages.append({"page_id": new_id, "width_px": width, "height_px": height, "blocks": blocks})
    for label, n in sorted(dropped.items()):
        print(f"layout_adapter: dropped {n} regions labeled {label!r}", file=sys.stderr)
    return {"doc_id": doc_id, "source": source, "pages": out_pages}


def run_tool(command, input_path, outdir):
    argv = [a.replace("{input}", str(input_path)).replace("{outdir}", str(outdir)) for a in shlex.split(command)]
    subprocess.run(argv, check=True)
    return list(Path(outdir).glob("*.json"))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("inputs", nargs="+", type=Path, help="per-page JSON files, or documents when --command is set")
    ap.add_argument("--doc-id", required=True)
    ap.add_argument("--source", required=True, help="corpus name, e.g. arXiv")
    ap.add_argument("--command", help="layout tool command line with {input} and {outdir}")
    ap.add_argument("--out", type=Path, help="output file (default stdout)")
    args = ap.parse_args(argv)

    if args.command:
        if len(args.inputs) != 1:
            ap.error("--command takes exactly one input document")
        with tempfile.TemporaryDirectory() as tmp:
            pages = load_pages(run_tool(args.command, args.inputs[0], tmp))
    else:
        pages = load_pages(args.inputs)
    if not pages:
        print("layout_adapter: no pages found", file=sys.stderr)
        return 1

    body = json.dumps(to_document(args.doc_id, args.source, pages), sort_keys=True, separators=(",", ":")) + "\n"
    if args.out:
        args.out.write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    return 0


if __name__ == "__main__":
    sys.exit(main())

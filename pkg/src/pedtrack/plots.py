"""Standalone SVG figures, each written next to a CSV of the plotted numbers.

Kinds:
    path            {label: (N, 2) xy points}; first series red, second green
    training_curve  {label: (N, 2) (epoch, value) points}
    bar             {label: value}
"""

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

PALETTE = ("#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b")
W, H, PAD = 640, 480, 50


def _csv_path(path):
    return Path(path).with_suffix(".csv")


def _write_sidecar(series, kind, path):
    with open(_csv_path(path), "w") as f:
        if kind == "bar":
            f.write("label,value\n")
            for label, v in series.items():
                f.write(f"{label},{float(v)!r}\n")
        else:
            f.write("series,x,y\n")
            for label, pts in series.items():
                for x, y in np.asarray(pts, dtype=np.float64).reshape(-1, 2):
                    f.write(f"{label},{float(x)!r},{float(y)!r}\n")


def read_sidecar(path):
    """Inverse of the sidecar writer: ``{label: array}`` or ``{label: value}``."""
    with open(_csv_path(path)) as f:
        header = f.readline().strip()
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if header == "label,value":
        return {r[0]: float(r[1]) for r in rows}
    out = {}
    for label, x, y in rows:
        out.setdefault(label, []).append((float(x), float(y)))
    return {k: np.array(v) for k, v in out.items()}


class _Frame:
    def __init__(self, xs, ys, equal=False):
        x0, x1 = float(np.min(xs)), float(np.max(xs))
        y0, y1 = float(np.min(ys)), float(np.max(ys))
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        sx = (W - 2 * PAD) / (x1 - x0)
        sy = (H - 2 * PAD) / (y1 - y0)
        if equal:
            sx = sy = min(sx, sy)
        self.x0, self.y0, self.sx, self.sy = x0, y0, sx, sy

    def __call__(self, x, y):
        return PAD + (x - self.x0) * self.sx, H - PAD - (y - self.y0) * self.sy


def _axes(svg):
    g = ET.SubElement(svg, "g", stroke="black", attrib={"stroke-width": "1"})
    ET.SubElement(g, "line", x1=str(PAD), y1=str(H - PAD), x2=str(W - PAD), y2=str(H - PAD))
    ET.SubElement(g, "line", x1=str(PAD), y1=str(PAD), x2=str(PAD), y2=str(H - PAD))


def _legend(svg, labels):
    g = ET.SubElement(svg, "g", attrib={"font-size": "12", "font-family": "sans-serif"})
    for i, label in enumerate(labels):
        y = PAD + 16 * i
        ET.SubElement(g, "rect", x=str(W - PAD - 120), y=str(y - 8), width="12", height="8", fill=PALETTE[i % len(PALETTE)])
        ET.SubElement(g, "text", x=str(W - PAD - 102), y=str(y)).text = label


def emit_plot(series, kind, path, title=""):
    if not series:
        raise ValueError("nothing to plot")
    if kind not in ("path", "training_curve", "bar"):
        raise ValueError(f"unknown plot kind {kind!r}")
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(W), height=str(H))
    if title:
        ET.SubElement(svg, "text", x=str(W / 2), y="20", attrib={"text-anchor": "middle", "font-family": "sans-serif"}).text = title
    _axes(svg)

    if kind == "bar":
        labels = list(series)
        vals = np.array([float(series[k]) for k in labels])
        top = float(vals.max()) if vals.max() > 0 else 1.0
        bw = (W - 2 * PAD) / len(labels)
        for i, (label, v) in enumerate(zip(labels, vals)):
            h = (H - 2 * PAD) * max(v, 0.0) / top
            ET.SubElement(svg, "rect", x=f"{PAD + i * bw + 0.1 * bw:.2f}", y=f"{H - PAD - h:.2f}", width=f"{0.8 * bw:.2f}",
                          height=f"{h:.2f}", fill=PALETTE[i % len(PALETTE)])
            ET.SubElement(svg, "text", x=f"{PAD + (i + 0.5) * bw:.2f}", y=str(H - PAD + 15),
                          attrib={"text-anchor": "middle", "font-size": "11"}).text = label
    else:
        arrays = {k: np.asarray(v, dtype=np.float64).reshape(-1, 2) for k, v in series.items()}
        allp = np.vstack(list(arrays.values()))
        frame = _Frame(allp[:, 0], allp[:, 1], equal=(kind == "path"))
        for i, (label, pts) in enumerate(arrays.items()):
            coords = " ".join("%.3f,%.3f" % frame(x, y) for x, y in pts)
            ET.SubElement(svg, "polyline", points=coords, fill="none", stroke=PALETTE[i % len(PALETTE)],
                          attrib={"stroke-width": "2"}).set("data-label", label)
        _legend(svg, list(arrays))

    ET.ElementTree(svg).write(path, encoding="unicode", xml_declaration=False)
    _write_sidecar(series, kind, path)
    return Path(path)

"""Face normalisation from landmarks, HOG descriptors and descriptor selection.

Pixel coordinates place pixel centres on integer positions: column ``x``
and row ``y`` of an image sit at ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from affectfusion.data.types import DescriptorSet, GrayImage, LandmarkFrame
from affectfusion.errors import ValidationError


@dataclass(frozen=True)
class AffineTransform2D:
    """2x3 matrix ``[[a, b, tx], [c, d, ty]]`` mapping source to output pixels."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (2, 3) or not np.all(np.isfinite(m)):
            raise ValidationError(f"affine matrix must be a finite 2x3 array, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix[:, :2]))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "AffineTransform2D":
        if abs(self.det) <= 1e-9:
            raise ValidationError(f"affine transform is not invertible (det={self.det:.3g})")
        lin = np.linalg.inv(self.matrix[:, :2])
        return AffineTransform2D(np.column_stack([lin, -lin @ self.matrix[:, 2]]))

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(np.eye(2, 3))


@dataclass(frozen=True)
class AlignmentTemplate:
    points: np.ndarray  # (k, 2) canonical landmark positions in the output frame
    width: int
    height: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValidationError("template needs at least 3 (x, y) points")
        if self.width < 1 or self.height < 1:
            raise ValidationError("template output size must be positive")
        if (pts < 0).any() or (pts[:, 0] > self.width - 1).any() or (pts[:, 1] > self.height - 1).any():
            raise ValidationError("template points must lie inside the output frame")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_json(cls, doc: dict) -> "AlignmentTemplate":
        try:
            return cls(doc["points"], int(doc["width"]), int(doc["height"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed alignment template: {exc}") from None


@dataclass(frozen=True)
class HogConfig:
    window: tuple[int, int] = (64, 128)  # (width, height)
    cell: int = 8
    block: int = 2  # cells per block side
    block_stride: int = 8  # pixels
    bins: int = 9
    clip: float = 0.2
    eps: float = 1e-6

    def __post_init__(self):
        w, h = self.window
        if min(w, h, self.cell, self.block, self.block_stride, self.bins) < 1:
            raise ValidationError("HOG parameters must be positive")
        if w % self.cell or h % self.cell or self.block_stride % self.cell:
            raise ValidationError("HOG window and block stride must be multiples of the cell size")
        if self.block * self.cell > min(w, h):
            raise ValidationError("HOG block does not fit in the window")

    @property
    def cells(self) -> tuple[int, int]:
        return self.window[0] // self.cell, self.window[1] // self.cell

    @property
    def blocks(self) -> tuple[int, int]:
        step = self.block_stride // self.cell
        cx, cy = self.cells
        return (cx - self.block) // step + 1, (cy - self.block) // step + 1

    @property
    def length(self) -> int:
        bx, by = self.blocks
        return bx * by * self.block * self.block * self.bins


def fit_affine(src: LandmarkFrame, template: AlignmentTemplate) -> tuple[AffineTransform2D, float]:
    """Least-squares affine map from ``src`` landmarks onto the template.

    Returns the transform and the residual sum of squares.
    """
    p = np.asarray(src.points, dtype=np.float64)
    q = np.asarray(template.points, dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(
            f"frame {src.frame_index}: {p.shape[0]} landmarks vs {q.shape[0]} template points"
        )
    design = np.column_stack([p, np.ones(len(p))])
    # rank test on centred points catches collinear configurations at any scale
    centred = p - p.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1.0):
        raise ValidationError(f"frame {src.frame_index}: landmarks are collinear or degenerate")
    coef, *_ = np.linalg.lstsq(design, q, rcond=None)
    resid = float(np.sum((design @ coef - q) ** 2))
    return AffineTransform2D(coef.T), resid


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    h, w = img.shape
    tol = 1e-9
    inside = (xs >= -tol) & (xs <= w - 1 + tol) & (ys >= -tol) & (ys <= h - 1 + tol)
    x = np.clip(xs, 0, w - 1)
    y = np.clip(ys, 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, fill)


def warp_image(img: GrayImage, t: AffineTransform2D, width: int, height: int) -> GrayImage:
    """Warp ``img`` into a ``width`` x ``height`` frame by inverse bilinear mapping.

    Output pixels whose pre-image falls outside the source are 0.
    """
    inv = t.inverse()
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    src = inv.apply(np.column_stack([xx.ravel(), yy.ravel()]))
    vals = _bilinear_sample(img.pixels.astype(np.float64), src[:, 0], src[:, 1], 0.0)
    return GrayImage(np.clip(np.rint(vals), 0, 255).reshape(height, width).astype(np.uint8))


def resize_bilinear(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Half-pixel-centred bilinear resize with edge replication; float output."""
    src = np.asarray(pixels, dtype=np.float64)
    h, w = src.shape
    if (w, h) == (width, height):
        return src.copy()
    xs = np.clip((np.arange(width) + 0.5) * (w / width) - 0.5, 0, w - 1)
    ys = np.clip((np.arange(height) + 0.5) * (h / height) - 0.5, 0, h - 1)
    gx, gy = np.meshgrid(xs, ys)
    return _bilinear_sample(src, gx.ravel(), gy.ravel(), 0.0).reshape(height, width)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(img, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


def _cell_histograms(mag: np.ndarray, ang: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """Trilinear votes into a (cells_y, cells_x, bins) histogram grid."""
    ncx, ncy = cfg.cells
    h, w = mag.shape
    bin_width = 180.0 / cfg.bins
    # orientation: bin centres at (b + 0.5) * bin_width, circular
    pos = ang / bin_width - 0.5
    b0 = np.floor(pos).astype(np.intp)
    wb1 = pos - b0
    b1 = (b0 + 1) % cfg.bins
    b0 = b0 % cfg.bins
    # space: cell centres at (c + 0.5) * cell - 0.5 in pixel coordinates
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cxf = (xx + 0.5) / cfg.cell - 0.5
    cyf = (yy + 0.5) / cfg.cell - 0.5
    cx0 = np.floor(cxf).astype(np.intp)
    cy0 = np.floor(cyf).astype(np.intp)
    wx1 = cxf - cx0
    wy1 = cyf - cy0
    hist = np.zeros((ncy + 2, ncx + 2, cfg.bins))  # one-cell margin absorbs out-of-range votes
    for dy, wy in ((0, 1 - wy1), (1, wy1)):
        for dx, wx in ((0, 1 - wx1), (1, wx1)):
            for bidx, wbin in ((b0, 1 - wb1), (b1, wb1)):
                np.add.at(
                    hist,
                    (cy0 + dy + 1, cx0 + dx + 1, bidx),
                    mag * wy * wx * wbin,
                )
    return hist[1:-1, 1:-1]


def _l2_hys(v: np.ndarray, clip: float, eps: float) -> np.ndarray:
    v = v / np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps * eps)
    v = np.minimum(v, clip)
    return v / np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps * eps)


def hog_extract(img, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptor of a whole image after resizing it to ``cfg.window``.

    Blocks are ordered row-major (top to bottom, left to right); inside a
    block the cells are row-major and each contributes ``cfg.bins`` values.
    """
    pixels = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    win = resize_bilinear(pixels, *cfg.window)
    gx, gy = _gradients(win)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    ang[ang >= 180.0] = 0.0
    hist = _cell_histograms(mag, ang, cfg)
    step = cfg.block_stride // cfg.cell
    nbx, nby = cfg.blocks
    blocks = np.empty((nby, nbx, cfg.block * cfg.block * cfg.bins))
    for by in range(nby):
        for bx in range(nbx):
            cy, cx = by * step, bx * step
            blocks[by, bx] = hist[cy : cy + cfg.block, cx : cx + cfg.block].ravel()
    return _l2_hys(blocks, cfg.clip, cfg.eps).ravel()


def select_top_descriptors(d: DescriptorSet, r: int = 50) -> DescriptorSet:
    """Keep the ``r`` highest-response rows, preserving their original order.

    Equal responses favour the earlier row.
    """
    if r < 1:
        raise ValidationError(f"descriptor count must be >= 1, got {r}")
    if len(d) == 0:
        raise ValidationError(f"frame {d.frame_index}: empty descriptor set")
    order = np.argsort(-d.responses, kind="stable")[:r]
    keep = np.sort(order)
    return DescriptorSet(d.descriptors[keep], d.responses[keep], d.frame_index)

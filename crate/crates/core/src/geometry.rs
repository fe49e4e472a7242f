//! Box arithmetic on the normalized `[0, 1000)` integer grid.
//!
//! Boxes are half-open: `[x1, x2) x [y1, y2)`, so the area of a box is simply
//! `(x2 - x1) * (y2 - y1)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Largest coordinate a normalized box may store.
pub const MAX_COORD: u16 = 999;

/// Components smaller than this many pixels are treated as mask noise.
pub const DEFAULT_MIN_AREA: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("coordinate {0} exceeds {MAX_COORD}")]
    OutOfRange(u32),
    #[error("degenerate box [{x1}, {y1}, {x2}, {y2}]: need x1 < x2 and y1 < y2")]
    Degenerate { x1: u32, y1: u32, x2: u32, y2: u32 },
    #[error("pixel box ({x1}, {y1}, {x2}, {y2}) does not fit a {width}x{height} image")]
    OutsideImage {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
        width: u32,
        height: u32,
    },
    #[error("mask has {cells} cells, expected {width}x{height}")]
    MaskSize {
        width: u32,
        height: u32,
        cells: usize,
    },
}

/// Axis-aligned box in normalized integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(into = "[u16; 4]"))]
pub struct BBox {
    x1: u16,
    y1: u16,
    x2: u16,
    y2: u16,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, GeometryError> {
        for v in [x1, y1, x2, y2] {
            if v > u32::from(MAX_COORD) {
                return Err(GeometryError::OutOfRange(v));
            }
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self {
            x1: x1 as u16,
            y1: y1 as u16,
            x2: x2 as u16,
            y2: y2 as u16,
        })
    }

    pub fn x1(&self) -> u16 {
        self.x1
    }

    pub fn y1(&self) -> u16 {
        self.y1
    }

    pub fn x2(&self) -> u16 {
        self.x2
    }

    pub fn y2(&self) -> u16 {
        self.y2
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> u32 {
        u32::from(self.x2 - self.x1)
    }

    pub fn height(&self) -> u32 {
        u32::from(self.y2 - self.y1)
    }

    pub fn area(&self) -> u32 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> u32 {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 >= x2 || y1 >= y2 {
            0
        } else {
            u32::from(x2 - x1) * u32::from(y2 - y1)
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

impl From<BBox> for [u16; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [u32; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

/// Canonical `[x1, y1, x2, y2]` rendering used inside `<box>` elements.
impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Intersection over union of two boxes. Symmetric, in `[0, 1]`, exactly 1
/// for identical boxes and 0 for disjoint ones.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    f64::from(inter) / f64::from(union)
}

/// Half-open box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), GeometryError> {
        if self.x1 < self.x2 && self.y1 < self.y2 && self.x2 <= width && self.y2 <= height {
            Ok(())
        } else {
            Err(GeometryError::OutsideImage {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
                width,
                height,
            })
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x2 - self.x1) * u64::from(self.y2 - self.y1)
    }
}

fn scale(v: u32, dim: u32) -> u32 {
    let scaled = u64::from(v) * 1000 / u64::from(dim);
    scaled.min(u64::from(MAX_COORD)) as u32
}

/// Maps a pixel box onto the `[0, 1000)` grid, scaling each axis by its own
/// image dimension: `min(999, floor(v * 1000 / dim))`.
pub fn normalize_box(p: &PixelBox, width: u32, height: u32) -> Result<BBox, GeometryError> {
    p.validate(width, height)?;
    let x1 = scale(p.x1, width);
    let y1 = scale(p.y1, height);
    let x2 = scale(p.x2, width);
    let y2 = scale(p.y2, height);
    BBox::new(x1, y1, x2, y2)
}

/// Binary occupancy grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    width: u32,
    height: u32,
    cells: Vec<bool>,
}

impl MaskGrid {
    pub fn new(width: u32, height: u32, cells: Vec<bool>) -> Result<Self, GeometryError> {
        if cells.len() != width as usize * height as usize {
            return Err(GeometryError::MaskSize {
                width,
                height,
                cells: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.cells[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        let idx = y as usize * self.width as usize + x as usize;
        self.cells[idx] = on;
    }

    /// Sets every cell of the half-open rectangle.
    pub fn fill(&mut self, b: &PixelBox) {
        for y in b.y1..b.y2.min(self.height) {
            for x in b.x1..b.x2.min(self.width) {
                self.set(x, y, true);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Tight bounding box of every 4-connected foreground component holding at
/// least `min_area` cells, ordered by `(top, left)`.
pub fn mask_to_boxes(mask: &MaskGrid, min_area: usize) -> Vec<PixelBox> {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut boxes = Vec::new();

    for start in 0..w * h {
        if !mask.cells[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0usize;
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            area += 1;
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x + 1);
            y2 = y2.max(y + 1);
            let mut visit = |n: usize| {
                if mask.cells[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        if area >= min_area {
            boxes.push(PixelBox::new(x1 as u32, y1 as u32, x2 as u32, y2 as u32));
        }
    }

    boxes.sort_by_key(|b| (b.y1, b.x1));
    boxes
}

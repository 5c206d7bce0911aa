//! Minimal line charts rendered straight to RGB rasters.

use image::{Rgb, RgbImage};

const GLYPH_W: u32 = 3;

#[rustfmt::skip]
const GLYPHS: &[(char, [&str; 5])] = &[
    ('0', ["###", "#.#", "#.#", "#.#", "###"]), ('1', [".#.", "##.", ".#.", ".#.", "###"]),
    ('2', ["###", "..#", "###", "#..", "###"]), ('3', ["###", "..#", "###", "..#", "###"]),
    ('4', ["#.#", "#.#", "###", "..#", "..#"]), ('5', ["###", "#..", "###", "..#", "###"]),
    ('6', ["###", "#..", "###", "#.#", "###"]), ('7', ["###", "..#", "..#", "..#", "..#"]),
    ('8', ["###", "#.#", "###", "#.#", "###"]), ('9', ["###", "#.#", "###", "..#", "###"]),
    ('-', ["...", "...", "###", "...", "..."]), ('.', ["...", "...", "...", "...", ".#."]),
    ('+', ["...", ".#.", "###", ".#.", "..."]), (':', ["...", ".#.", "...", ".#.", "..."]),
    ('(', [".#.", "#..", "#..", "#..", ".#."]), (')', [".#.", "..#", "..#", "..#", ".#."]),
    ('A', [".#.", "#.#", "###", "#.#", "#.#"]), ('B', ["##.", "#.#", "##.", "#.#", "##."]),
    ('C', [".##", "#..", "#..", "#..", ".##"]), ('D', ["##.", "#.#", "#.#", "#.#", "##."]),
    ('E', ["###", "#..", "##.", "#..", "###"]), ('F', ["###", "#..", "##.", "#..", "#.."]),
    ('G', [".##", "#..", "#.#", "#.#", ".##"]), ('H', ["#.#", "#.#", "###", "#.#", "#.#"]),
    ('I', ["###", ".#.", ".#.", ".#.", "###"]), ('J', ["..#", "..#", "..#", "#.#", ".#."]),
    ('K', ["#.#", "#.#", "##.", "#.#", "#.#"]), ('L', ["#..", "#..", "#..", "#..", "###"]),
    ('M', ["#.#", "###", "###", "#.#", "#.#"]), ('N', ["##.", "#.#", "#.#", "#.#", "#.#"]),
    ('O', [".#.", "#.#", "#.#", "#.#", ".#."]), ('P', ["##.", "#.#", "##.", "#..", "#.."]),
    ('Q', [".#.", "#.#", "#.#", "##.", ".##"]), ('R', ["##.", "#.#", "##.", "#.#", "#.#"]),
    ('S', [".##", "#..", ".#.", "..#", "##."]), ('T', ["###", ".#.", ".#.", ".#.", ".#."]),
    ('U', ["#.#", "#.#", "#.#", "#.#", "###"]), ('V', ["#.#", "#.#", "#.#", "#.#", ".#."]),
    ('W', ["#.#", "#.#", "###", "###", "#.#"]), ('X', ["#.#", "#.#", ".#.", "#.#", "#.#"]),
    ('Y', ["#.#", "#.#", ".#.", ".#.", ".#."]), ('Z', ["###", "..#", ".#.", "#..", "###"]),
];

/// Distinct curve colours, cycled.
pub const PALETTE: [[u8; 3]; 10] = [
    [0, 0, 0],
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
];

pub struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self { img: RgbImage::from_pixel(width, height, Rgb([255, 255, 255])) }
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(c));
        }
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    /// Bresenham line stamped with a `width`-pixel square pen.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), width: i64, c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        let off = width / 2;
        loop {
            self.fill_rect(x - off, y - off, width, width, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Upper-cased text in a 3x5 pixel font magnified by `scale`. Unknown characters render blank.
    pub fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: [u8; 3]) {
        for (i, ch) in s.chars().enumerate() {
            let ch = ch.to_ascii_uppercase();
            let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) else { continue };
            let gx = x + i as i64 * (GLYPH_W as i64 + 1) * scale;
            for (r, row) in rows.iter().enumerate() {
                for (col, px) in row.chars().enumerate() {
                    if px == '#' {
                        self.fill_rect(gx + col as i64 * scale, y + r as i64 * scale, scale, scale, c);
                    }
                }
            }
        }
    }

    pub fn text_width(s: &str, scale: i64) -> i64 {
        s.chars().count() as i64 * (GLYPH_W as i64 + 1) * scale
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with y fixed to `[0, 1]`, x ticks at the data's x values, legend on the right.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> RgbImage {
    let (width, height) = (880u32, 480u32);
    let (left, right, top, bottom) = (70i64, 640i64, 40i64, 420i64);
    let mut c = Canvas::new(width, height);
    let black = [0, 0, 0];
    let grey = [225, 225, 225];

    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (x_min, x_max) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let px = |x: f64| left + ((x - x_min) / (x_max - x_min) * (right - left - 40) as f64).round() as i64 + 20;
    let py = |y: f64| bottom - (y.clamp(0.0, 1.0) * (bottom - top) as f64).round() as i64;

    for i in 0..=10 {
        let v = f64::from(i) / 10.0;
        let y = py(v);
        c.line((left, y), (right, y), 1, grey);
        if i % 2 == 0 {
            let label = format!("{v:.1}");
            c.text(left - 8 - Canvas::text_width(&label, 2), y - 5, &label, 2, black);
        }
    }
    for &x in &xs {
        let label = format!("{x}");
        c.line((px(x), bottom), (px(x), bottom + 5), 1, black);
        c.text(px(x) - Canvas::text_width(&label, 2) / 2, bottom + 10, &label, 2, black);
    }
    c.line((left, top), (left, bottom), 2, black);
    c.line((left, bottom), (right, bottom), 2, black);
    c.text(left, 12, title, 3, black);
    c.text((left + right) / 2 - Canvas::text_width(x_label, 2) / 2, bottom + 35, x_label, 2, black);
    c.text(8, top - 20, y_label, 2, black);

    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(i64, i64)> = s.points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        pts.sort();
        for w in pts.windows(2) {
            c.line(w[0], w[1], 3, colour);
        }
        for &(x, y) in &pts {
            c.fill_rect(x - 4, y - 4, 9, 9, colour);
        }
        let ly = top + 10 + i as i64 * 24;
        c.fill_rect(right + 20, ly, 24, 10, colour);
        c.text(right + 52, ly, &s.label, 2, black);
    }
    c.img
}

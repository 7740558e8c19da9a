//! Text and image rendering of grid states.
//!
//! Both renderers take the bare environment plus overlay markers for things
//! that live outside the cell array (agents, highlighted targets), so every
//! task can reuse them regardless of how it stores its actors.

use crate::grids::env::{color, kind, Dir, GridEnv};

/// An overlay marker drawn on top of a cell.
#[derive(Debug, Clone, Copy)]
pub struct Marker {
    pub x: usize,
    pub y: usize,
    /// Glyph for text rendering.
    pub glyph: char,
    /// Fill for image rendering.
    pub rgb: [u8; 3],
}

impl Marker {
    /// Conventional agent marker: an arrow showing the facing.
    pub fn agent(x: usize, y: usize, dir: Dir, rgb: [u8; 3]) -> Marker {
        let glyph = match dir {
            Dir::East => '>',
            Dir::South => 'v',
            Dir::West => '<',
            Dir::North => '^',
        };
        Marker { x, y, glyph, rgb }
    }
}

fn cell_glyph(k: u16) -> char {
    match k {
        kind::UNSEEN => ' ',
        kind::EMPTY | kind::FLOOR => '.',
        kind::WALL => '#',
        kind::DOOR => 'D',
        kind::KEY => 'k',
        kind::BALL => 'o',
        kind::BOX => 'x',
        kind::GOAL => 'G',
        kind::LAVA => '~',
        kind::AGENT => 'A',
        _ => '?',
    }
}

/// One line per row, one character per cell, markers on top.
pub fn render_text(env: &GridEnv, markers: &[Marker]) -> String {
    let mut out = String::with_capacity((env.width() + 1) * env.height());
    for y in 0..env.height() {
        for x in 0..env.width() {
            let marked = markers.iter().rev().find(|m| m.x == x && m.y == y);
            match marked {
                Some(m) => out.push(m.glyph),
                None => out.push(cell_glyph(env.get(x, y).kind)),
            }
        }
        out.push('\n');
    }
    out
}

/// Pixels per rendered cell.
pub const CELL_PX: usize = 12;

fn cell_rgb(k: u16, c: u16) -> [u8; 3] {
    match k {
        kind::UNSEEN => [0, 0, 0],
        kind::EMPTY | kind::FLOOR => [32, 32, 32],
        kind::WALL => [96, 96, 96],
        kind::LAVA => [255, 128, 24],
        kind::GOAL => [40, 160, 66],
        _ => color::rgb(c),
    }
}

/// RGB8 frame, `CELL_PX` pixels per cell, markers drawn as inset squares.
/// Returns `(width_px, height_px, data)` with rows top to bottom.
pub fn render_rgb(env: &GridEnv, markers: &[Marker]) -> (usize, usize, Vec<u8>) {
    let (w, h) = (env.width() * CELL_PX, env.height() * CELL_PX);
    let mut data = vec![0u8; w * h * 3];
    let mut fill = |x: usize, y: usize, inset: usize, rgb: [u8; 3]| {
        for py in y * CELL_PX + inset..(y + 1) * CELL_PX - inset {
            for px in x * CELL_PX + inset..(x + 1) * CELL_PX - inset {
                let at = (py * w + px) * 3;
                data[at..at + 3].copy_from_slice(&rgb);
            }
        }
    };
    for y in 0..env.height() {
        for x in 0..env.width() {
            let cell = env.get(x, y);
            let mut rgb = cell_rgb(cell.kind, cell.color);
            // A one-pixel grid line around every cell keeps frames readable.
            fill(x, y, 0, [12, 12, 12]);
            if matches!(cell.kind, kind::KEY | kind::BALL | kind::BOX) {
                // Objects draw as colored squares on a floor background.
                fill(x, y, 1, [32, 32, 32]);
                fill(x, y, 3, rgb);
            } else {
                if cell.kind == kind::EMPTY || cell.kind == kind::FLOOR {
                    rgb = [32, 32, 32];
                }
                fill(x, y, 1, rgb);
            }
        }
    }
    for m in markers {
        fill(m.x, m.y, CELL_PX / 4, m.rgb);
    }
    (w, h, data)
}

/// Serializes an RGB frame as a binary PPM (P6) image — the simplest
/// self-contained format every viewer understands.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "ppm: {} bytes for {}x{} rgb", rgb.len(), width, height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::env::Cell;

    #[test]
    fn text_render_shows_walls_objects_and_markers() {
        let mut env = GridEnv::walled(4, 3);
        env.set(1, 1, Cell::of(kind::BALL, color::RED));
        let text = render_text(&env, &[Marker::agent(2, 1, Dir::East, [255, 0, 0])]);
        assert_eq!(text, "####\n#o>#\n####\n");
    }

    #[test]
    fn ppm_frames_have_correct_header_and_size() {
        let env = GridEnv::walled(3, 2);
        let (w, h, rgb) = render_rgb(&env, &[]);
        assert_eq!((w, h), (3 * CELL_PX, 2 * CELL_PX));
        let ppm = encode_ppm(w, h, &rgb);
        let header = format!("P6\n{w} {h}\n255\n");
        assert!(ppm.starts_with(header.as_bytes()));
        assert_eq!(ppm.len(), header.len() + w * h * 3);
    }
}

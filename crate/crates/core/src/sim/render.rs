use image::{Rgb, RgbImage};

use super::definition::{EnvDefinition, Render, StateDef};
use super::font;
use crate::raster::luma_of;

/// Ink colour for text: black on light backgrounds, white on dark ones.
fn ink_for(background: [u8; 3]) -> Rgb<u8> {
    if luma_of(background[0], background[1], background[2]) >= 128 {
        Rgb([0, 0, 0])
    } else {
        Rgb([255, 255, 255])
    }
}

/// Draws `state`: flat background, icons blitted verbatim, text in the
/// built-in bitmap font anchored at the bbox origin and clipped to the bbox.
pub fn render(state: &StateDef, env: &EnvDefinition) -> RgbImage {
    let screen = env.screen();
    let mut img = RgbImage::from_pixel(screen.w, screen.h, Rgb(state.background));
    let ink = ink_for(state.background);
    for el in &state.elements {
        let b = el.bbox;
        match &el.render {
            Render::Icon(tid) => {
                let Some(t) = env.template(tid) else { continue };
                for (x, y, p) in t.image().enumerate_pixels() {
                    if x < b.w && y < b.h {
                        let v = p.0[0];
                        img.put_pixel(b.x + x, b.y + y, Rgb([v, v, v]));
                    }
                }
            }
            Render::Text(content) => {
                for (i, ch) in content.chars().enumerate() {
                    let ox = i as u32 * font::ADVANCE;
                    if ox >= b.w {
                        break;
                    }
                    for col in 0..font::GLYPH_W {
                        for row in 0..font::GLYPH_H {
                            let (dx, dy) = (ox + col, row);
                            if dx < b.w && dy < b.h && font::is_set(ch, col, row) {
                                img.put_pixel(b.x + dx, b.y + dy, ink);
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

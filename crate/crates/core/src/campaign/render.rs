use std::fmt::Write as _;
use std::str::FromStr;

use crate::lattice::{Coord, LatticeLayout, PinKind, SIDE};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapStyle {
    Ascii,
    Svg,
}

impl FromStr for MapStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ascii" => Ok(MapStyle::Ascii),
            "svg" => Ok(MapStyle::Svg),
            _ => Err(Error::Config(format!(
                "map style must be ascii or svg, got `{s}`"
            ))),
        }
    }
}

const CELL_PX: usize = 24;

fn fill(kind: PinKind) -> &'static str {
    match kind {
        PinKind::Fuel => "#f2c14e",
        PinKind::Gd => "#2e7d32",
        PinKind::GuideTube => "#4a90d9",
    }
}

pub fn render_map(layout: &LatticeLayout, style: MapStyle) -> String {
    match style {
        MapStyle::Ascii => {
            let mut out = layout.serialize().into_string();
            writeln!(out).unwrap();
            writeln!(out, "f = fuel").unwrap();
            writeln!(out, "g = fuel with gadolinia ({} pins)", layout.gd_count()).unwrap();
            writeln!(out, "c = guide tube").unwrap();
            out
        }
        MapStyle::Svg => {
            let size = SIDE * CELL_PX;
            let legend = 3 * CELL_PX;
            let mut out = String::new();
            writeln!(
                out,
                r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{h}" viewBox="0 0 {size} {h}">"#,
                h = size + legend
            )
            .unwrap();
            writeln!(
                out,
                "<title>17x17 layout, {} Gd pins</title>",
                layout.gd_count()
            )
            .unwrap();
            for c in Coord::all() {
                writeln!(
                    out,
                    r##"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{}" stroke="#333333" stroke-width="1"/>"##,
                    c.col() * CELL_PX,
                    c.row() * CELL_PX,
                    fill(layout.get(c))
                )
                .unwrap();
            }
            for (i, (kind, label)) in [
                (PinKind::Fuel, "fuel"),
                (PinKind::Gd, "Gd"),
                (PinKind::GuideTube, "guide tube"),
            ]
            .into_iter()
            .enumerate()
            {
                let x = 8 + i * 130;
                let y = size + CELL_PX;
                writeln!(
                    out,
                    r##"<rect x="{x}" y="{y}" width="16" height="16" fill="{}" stroke="#333333" stroke-width="1"/>"##,
                    fill(kind)
                )
                .unwrap();
                writeln!(
                    out,
                    r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14">{label}</text>"#,
                    x + 22,
                    y + 13
                )
                .unwrap();
            }
            out.push_str("</svg>\n");
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_is_token_text_plus_legend() {
        let l = LatticeLayout::all_fuel();
        let s = render_map(&l, MapStyle::Ascii);
        assert!(s.starts_with(l.serialize().as_str()));
        let legend: Vec<&str> = s.lines().skip(SIDE).collect();
        assert_eq!(legend.len(), 4);
        assert_eq!(legend[1], "f = fuel");
    }

    #[test]
    fn svg_is_deterministic_and_colours_every_cell() {
        let l = LatticeLayout::from_gd_positions([Coord::at(0, 0), Coord::at(4, 4)]).unwrap();
        let a = render_map(&l, MapStyle::Svg);
        assert_eq!(a, render_map(&l, MapStyle::Svg));
        assert_eq!(a.matches(r##"fill="#2e7d32""##).count(), 2 + 1);
        assert_eq!(a.matches(r##"fill="#4a90d9""##).count(), 25 + 1);
        assert_eq!(a.matches("<rect").count(), 289 + 3);
        assert!("pdf".parse::<MapStyle>().is_err());
    }
}

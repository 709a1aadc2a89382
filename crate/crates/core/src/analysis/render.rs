use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::map::{Cell, ForagingMap};

/// Color of a cell with zero speed.
const BASE: [f64; 3] = [24.0, 24.0, 24.0];
/// Lightest shade for the fastest approach.
const TOWARD: [f64; 3] = [255.0, 96.0, 96.0];
/// Lightest shade for the fastest retreat.
const AWAY: [f64; 3] = [96.0, 96.0, 255.0];
const EXCLUDED: Rgb<u8> = Rgb([0, 0, 0]);
/// Rendered width of a map, in pixels, before rounding to whole cells.
const TARGET_WIDTH: usize = 404;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub resolution: usize,
    pub extent: f64,
    pub timer: f64,
    pub conditional_on: Option<[f64; 2]>,
    /// Colors scale against the largest |speed| of this map alone.
    pub normalization: String,
    pub max_abs_speed: f64,
    pub simulated_steps: u64,
    pub diagnostics: Vec<String>,
}

impl MapMeta {
    pub fn of(map: &ForagingMap) -> Self {
        Self {
            resolution: map.resolution,
            extent: map.extent,
            timer: map.timer,
            conditional_on: map.conditional_on,
            normalization: "per_map".into(),
            max_abs_speed: map.max_abs_speed(),
            simulated_steps: map.simulated_steps,
            diagnostics: map.diagnostics.clone(),
        }
    }
}

/// `<organism>_map_<res>` with `_cond_<x>_<y>` appended for conditional maps.
pub fn map_file_stem(organism_id: &str, resolution: usize, cond: Option<[f64; 2]>) -> String {
    match cond {
        Some([x, y]) => format!("{organism_id}_map_{resolution}_cond_{x}_{y}"),
        None => format!("{organism_id}_map_{resolution}"),
    }
}

fn shade(t: f64, end: [f64; 3]) -> Rgb<u8> {
    let c = |k: usize| (BASE[k] + t * (end[k] - BASE[k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

pub fn cell_color(speed: f64, max_abs: f64, excluded: bool) -> Rgb<u8> {
    if excluded {
        return EXCLUDED;
    }
    let t = if max_abs > 0.0 {
        (speed.abs() / max_abs).min(1.0)
    } else {
        0.0
    };
    shade(t, if speed >= 0.0 { TOWARD } else { AWAY })
}

/// Diverging red/blue image, one square block per cell, row 0 at the top.
pub fn render_png(map: &ForagingMap) -> RgbImage {
    let px = (TARGET_WIDTH / map.resolution).max(1) as u32;
    let side = px * map.resolution as u32;
    let max_abs = map.max_abs_speed();
    RgbImage::from_fn(side, side, |x, y| {
        let c = map.cell((y / px) as usize, (x / px) as usize);
        cell_color(c.speed, max_abs, c.excluded)
    })
}

pub fn write_map_csv<W: Write>(cells: &[Cell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_map_csv<R: Read>(input: R) -> csv::Result<Vec<Cell>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Writes `<stem>.csv`, `<stem>.png` and `<stem>.meta.json` into `dir`.
pub fn write_map(map: &ForagingMap, dir: &Path, stem: &str) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_map_csv(&map.cells, BufWriter::new(File::create(&csv_path)?)).map_err(std::io::Error::other)?;
    let png_path = dir.join(format!("{stem}.png"));
    render_png(map).save(&png_path).map_err(std::io::Error::other)?;
    let meta_path = dir.join(format!("{stem}.meta.json"));
    std::fs::write(&meta_path, serde_json::to_string_pretty(&MapMeta::of(map))?)?;
    Ok(vec![csv_path, png_path, meta_path])
}

/// Loads a map written by [`write_map`].
pub fn read_map(dir: &Path, stem: &str) -> std::io::Result<ForagingMap> {
    let meta: MapMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))?)?;
    let cells = read_map_csv(File::open(dir.join(format!("{stem}.csv")))?).map_err(std::io::Error::other)?;
    Ok(ForagingMap {
        resolution: meta.resolution,
        extent: meta.extent,
        timer: meta.timer,
        cells,
        conditional_on: meta.conditional_on,
        simulated_steps: meta.simulated_steps,
        diagnostics: meta.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::foraging_map_with;
    use crate::episode::StraightLineRunner;

    fn sample() -> ForagingMap {
        let mut m = foraging_map_with(&StraightLineRunner::new(0.7), 11, 10.0);
        for (i, c) in m.cells.iter_mut().enumerate() {
            if !c.excluded {
                c.speed = (i as f64 * 0.37).sin() / 3.0;
            }
        }
        m
    }

    #[test]
    fn scale_endpoints() {
        assert_eq!(cell_color(2.0, 2.0, false), Rgb([255, 96, 96]));
        assert_eq!(cell_color(-2.0, 2.0, false), Rgb([96, 96, 255]));
        assert_eq!(cell_color(0.0, 2.0, false), Rgb([24, 24, 24]));
        assert_eq!(cell_color(0.0, 0.0, false), Rgb([24, 24, 24]));
        assert_eq!(cell_color(1.0, 2.0, true), Rgb([0, 0, 0]));
    }

    #[test]
    fn all_zero_map_renders_dark() {
        let mut m = sample();
        m.cells.iter_mut().for_each(|c| c.speed = 0.0);
        let img = render_png(&m);
        assert_eq!(img.width(), 36 * 11);
        assert!(img.pixels().all(|p| p.0.iter().all(|&v| v <= 24)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        write_map_csv(&m.cells, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("row,col,x,y,speed,reached,excluded\n"));
        assert_eq!(read_map_csv(&buf[..]).unwrap(), m.cells);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        let stem = map_file_stem("abc", 11, Some([10.0, 0.0]));
        assert_eq!(stem, "abc_map_11_cond_10_0");
        let files = write_map(&m, dir.path(), &stem).unwrap();
        assert!(files.iter().all(|f| f.exists()));
        assert_eq!(read_map(dir.path(), &stem).unwrap(), m);
        assert_eq!(map_file_stem("abc", 101, None), "abc_map_101");
    }
}

//! Post-hoc analysis of evolved organisms.
//!
//! A foraging map tests one target per grid cell and records the mean signed
//! approach speed. A conditional map does the same for a second target after a
//! fixed first one has been absorbed. A foraging profile counts how deep into
//! a long random sequence an organism gets.

mod grid;
mod map;
mod profile;
mod render;

pub use grid::{is_excluded, Grid, EXTENT};
pub use map::{conditional_map, conditional_map_with, foraging_map, foraging_map_with, Cell, ForagingMap, MapError};
pub use profile::{consecutive_ratios, foraging_profile, foraging_profile_with, ForagingProfile};
pub use render::{cell_color, map_file_stem, read_map, read_map_csv, render_png, write_map, write_map_csv, MapMeta};

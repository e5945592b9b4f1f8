//! Figure presets, configuration files and CSV/SVG output.

mod config;
mod output;
mod presets;

pub use config::{parse_entries, ConfigError, ExperimentConfig, NoonClass, Preset, Sweep};
pub use output::{emit_csv, emit_svg, render_csv, render_svg, BUILD_ID, SVG_HEIGHT, SVG_WIDTH};
pub use presets::{
    half_pi_ns, parse_sweep_spec, run_point, run_preset, run_program, run_sweep, Derived, Field,
    ResultTable, Row, RunError, StatementKind, SweepTarget, CLASSES,
};

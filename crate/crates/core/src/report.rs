//! Plain-text output: numbers at 12 significant digits, CSV tables and
//! atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::simulator::Trajectory;

/// Formats like C's `%.12g`.
pub fn fmt_g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    strip_zeros(&format!("{:.*}", (11 - exp) as usize, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated table built in memory.
#[derive(Debug, Clone, Default)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut t = Self::default();
        t.row(header);
        t
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(|c| c.as_ref()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn labeled(&mut self, label: &str, values: &[f64]) {
        let mut cells = vec![label.to_string()];
        cells.extend(values.iter().map(|&v| fmt_g12(v)));
        self.row(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// `key = value` summary lines.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    text: String,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {value}");
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt_g12(value))
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Trajectory as CSV: time, bus frequencies, line angles, per-bus generation,
/// controllable and uncontrollable demand, and the Lyapunov value if present.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(traj.bus_ids.iter().map(|b| format!("omega_{b}")));
    header.extend(traj.line_ends.iter().map(|(f, t)| format!("eta_{f}_{t}")));
    for prefix in ["pM", "dc", "du"] {
        header.extend(traj.bus_ids.iter().map(|b| format!("{prefix}_{b}")));
    }
    let with_v = traj.samples.first().is_some_and(|s| s.v.is_some());
    if with_v {
        header.push("V".into());
    }
    let mut table = Table::new(&header);
    for s in &traj.samples {
        let mut row = vec![s.state.t];
        row.extend(&s.omega);
        row.extend(&s.state.eta);
        row.extend(&s.p_m);
        row.extend(&s.d_c);
        row.extend(&s.d_u);
        if with_v {
            row.push(s.v.unwrap_or(f64::NAN));
        }
        table.row(&row.iter().map(|&v| fmt_g12(v)).collect::<Vec<_>>());
    }
    table.text
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

use std::fmt::Write;

use clap::ValueEnum;
use serde_json::Value;

use pcsp_core::{OutcomeSet, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad input: exit code 2.
    Usage(String),
    /// A broken invariant: exit code 3.
    Internal(String),
}

pub type Outcome = Result<Report, Failure>;

/// A command's result: JSON for machines, lines for people, and whether the verdict was positive.
pub struct Report {
    pub json: Value,
    pub text: String,
    pub positive: bool,
}

impl Report {
    pub fn new(json: Value) -> Report {
        Report { json, text: String::new(), positive: true }
    }

    pub fn line(mut self, s: impl AsRef<str>) -> Report {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
        self
    }

    pub fn verdict(mut self, holds: bool) -> Report {
        self.positive = holds;
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("reports serialise");
                s.push('\n');
                s
            }
            Format::Text => self.text.clone(),
        }
    }
}

pub fn point(p: &[Q]) -> String {
    if p.len() == 1 {
        return p[0].to_string();
    }
    let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// `{0, 1/2, 1}` for raw sets, `hull{...}` for convex ones.
pub fn set(x: &OutcomeSet) -> String {
    let mut s = String::new();
    if x.mode == pcsp_core::Mode::Convex {
        s.push_str("hull");
    }
    s.push('{');
    for (i, p) in x.points.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(s, "{}", point(p)).unwrap();
    }
    s.push('}');
    s
}

pub fn set_json(x: &OutcomeSet) -> Value {
    serde_json::json!({
        "omega": x.omega,
        "mode": x.mode,
        "points": x.points,
    })
}

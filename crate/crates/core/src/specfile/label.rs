//! Node label templates.
//!
//! A template mixes literal text with `{variable}` or `{variable.FORMAT}`
//! placeholders. Time variables accept a format made of `%Y %m %d %H %M %S`
//! codes, with `--` standing in for a colon in the rendered value. Anything
//! that cannot be resolved renders as `N/A`, so rendering never fails.

use chrono::{DateTime, Datelike, Local, TimeDelta, Timelike};

use super::vars::VariableStore;
use crate::model::NodeSpec;

pub const NOT_AVAILABLE: &str = "N/A";
pub const DEFAULT_TIME_FORMAT: &str = "%m/%d/%Y %H:%M:%S";

/// Timestamps a label may refer to. Any of them may be unset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimerContext {
    /// Workflow creation.
    pub created: Option<DateTime<Local>>,
    /// Workflow run start.
    pub t0: Option<DateTime<Local>>,
    /// Workflow run end.
    pub t1: Option<DateTime<Local>>,
    pub now: Option<DateTime<Local>>,
    /// Job start.
    pub tstart: Option<DateTime<Local>>,
    /// Job end.
    pub tend: Option<DateTime<Local>>,
    /// Last modification of the state file.
    pub modified: Option<DateTime<Local>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTemplate {
    raw: String,
}

impl LabelTemplate {
    pub fn new(raw: impl Into<String>) -> Self {
        LabelTemplate { raw: raw.into() }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn render(&self, node: &NodeSpec, clocks: &TimerContext, vars: &VariableStore) -> String {
        render_label(&self.raw, node, clocks, vars)
    }
}

/// Renders `template` for `node`. Literal `\n` (backslash, n) in the template
/// text becomes a line break.
pub fn render_label(
    template: &str,
    node: &NodeSpec,
    clocks: &TimerContext,
    vars: &VariableStore,
) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        push_literal(&mut out, &rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push_str(&resolve(&after[..close], node, clocks, vars));
                rest = &after[close + 1..];
            }
            None => {
                push_literal(&mut out, &rest[open..]);
                rest = "";
            }
        }
    }
    push_literal(&mut out, rest);
    out
}

fn push_literal(out: &mut String, text: &str) {
    out.push_str(&text.replace("\\n", "\n"));
}

fn resolve(placeholder: &str, node: &NodeSpec, clocks: &TimerContext, vars: &VariableStore) -> String {
    let (var, format) = match placeholder.split_once('.') {
        Some((var, format)) => (var, Some(format)),
        None => (placeholder, None),
    };
    let na = || NOT_AVAILABLE.to_string();
    match var {
        "os" => format.and_then(|k| vars.os(k)).map_or_else(na, str::to_string),
        "cm" => format.and_then(|k| vars.cm(k)).map_or_else(na, str::to_string),
        "name" => node.name.clone(),
        "progress" => node.progress.to_string(),
        "status" => node.status.to_string(),
        "user" => node.user.clone(),
        "host" => node.host.clone(),
        "kind" => node.kind.to_string(),
        "script" => node.script.clone().unwrap_or_else(na),
        "exec" => node.exec.clone().unwrap_or_else(na),
        "now" | "created" | "t0" | "t1" | "tstart" | "tend" | "modified" => {
            let time = match var {
                "now" => clocks.now,
                "created" => clocks.created,
                "t0" => clocks.t0,
                "t1" => clocks.t1,
                "tstart" => clocks.tstart,
                "tend" => clocks.tend,
                _ => clocks.modified,
            };
            time.map_or_else(na, |t| format_time(&t, format))
        }
        "dt0" | "dt1" => {
            let since = if var == "dt0" { clocks.t0 } else { clocks.tstart };
            match (clocks.now, since) {
                (Some(now), Some(since)) => format_duration(now - since, format),
                _ => na(),
            }
        }
        _ => na(),
    }
}

/// Formats a timestamp. An absent or empty format gives the default
/// `%m/%d/%Y %H:%M:%S`; an explicit one has every `--` turned into `:`.
pub fn format_time(time: &DateTime<Local>, format: Option<&str>) -> String {
    match format {
        None | Some("") => expand(DEFAULT_TIME_FORMAT, |code| time_code(time, code)),
        Some(f) => expand(f, |code| time_code(time, code)).replace("--", ":"),
    }
}

/// Formats an elapsed duration. Default is `H:MM:SS` with unpadded hours.
pub fn format_duration(delta: TimeDelta, format: Option<&str>) -> String {
    let secs = delta.num_seconds().max(0);
    let (h, m, s) = (secs / 3600, (secs / 60) % 60, secs % 60);
    let code = |c: char| match c {
        'H' => Some(h.to_string()),
        'M' => Some(format!("{m:02}")),
        'S' => Some(format!("{s:02}")),
        _ => None,
    };
    match format {
        None | Some("") => expand("%H:%M:%S", code),
        Some(f) => expand(f, code).replace("--", ":"),
    }
}

fn time_code(t: &DateTime<Local>, code: char) -> Option<String> {
    Some(match code {
        'Y' => format!("{:04}", t.year()),
        'm' => format!("{:02}", t.month()),
        'd' => format!("{:02}", t.day()),
        'H' => format!("{:02}", t.hour()),
        'M' => format!("{:02}", t.minute()),
        'S' => format!("{:02}", t.second()),
        _ => return None,
    })
}

/// Expands `%X` codes through `code`; unknown codes stay literal, `%%` is a
/// percent sign.
fn expand(format: &str, code: impl Fn(char) -> Option<String>) -> String {
    let mut out = String::new();
    let mut chars = format.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('%') => out.push('%'),
            Some(other) => match code(other) {
                Some(v) => out.push_str(&v),
                None => {
                    out.push('%');
                    out.push(other);
                }
            },
            None => out.push('%'),
        }
    }
    out
}

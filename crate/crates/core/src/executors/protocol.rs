//! The progress protocol: jobs append lines of the form
//! `# cloudmesh status=<status> progress=<int> pid=<int>` to their log, and
//! the last such line is authoritative.

use std::sync::LazyLock;

use chrono::{DateTime, Local};
use regex::Regex;

use crate::model::{Progress, Status};

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^# cloudmesh status=(\w+) progress=(\d+)(?: pid=(\d+))?(?:\s|$)").unwrap()
});

/// What a probe learned about a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatusRecord {
    pub status: Status,
    pub progress: Progress,
    pub pid: Option<u32>,
    pub timestamp: Option<DateTime<Local>>,
}

impl StatusRecord {
    pub fn new(status: Status, progress: Progress) -> Self {
        StatusRecord {
            status,
            progress,
            pid: None,
            timestamp: None,
        }
    }
}

/// One protocol line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolLine {
    pub status: Status,
    pub progress: Progress,
    pub pid: Option<u32>,
}

/// Formats a protocol line (without trailing newline).
pub fn status_line(status: Status, progress: Progress, pid: Option<u32>) -> String {
    match pid {
        Some(pid) => format!("# cloudmesh status={status} progress={progress} pid={pid}"),
        None => format!("# cloudmesh status={status} progress={progress}"),
    }
}

/// Parses a single line. Lines with an unknown status word, a progress above
/// 100, or `done` below 100 are not protocol lines.
pub fn parse_line(line: &str) -> Option<ProtocolLine> {
    let caps = LINE.captures(line)?;
    let status: Status = caps[1].parse().ok()?;
    let progress = Progress::new(caps[2].parse::<i64>().ok()?).ok()?;
    if status == Status::Done && progress != Progress::DONE {
        return None;
    }
    let pid = match caps.get(3) {
        Some(m) => Some(m.as_str().parse::<u32>().ok()?),
        None => None,
    };
    Some(ProtocolLine {
        status,
        progress,
        pid,
    })
}

/// The last protocol line in a log, if any.
pub fn last_status(log: &str) -> Option<ProtocolLine> {
    log.lines().rev().find_map(parse_line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_lines() {
        let running = parse_line("# cloudmesh status=running progress=1 pid=4711").unwrap();
        assert_eq!(running.status, Status::Running);
        assert_eq!(running.progress.value(), 1);
        assert_eq!(running.pid, Some(4711));
        let done = parse_line("# cloudmesh status=done progress=100 pid=4711").unwrap();
        assert_eq!((done.status, done.progress), (Status::Done, Progress::DONE));
        assert_eq!(
            parse_line("# cloudmesh status=running progress=7").unwrap().pid,
            None
        );
    }

    #[test]
    fn rejects_near_misses() {
        for line in [
            "cloudmesh status=running progress=1",
            " # cloudmesh status=running progress=1",
            "# cloudmesh status=sleeping progress=1",
            "# cloudmesh status=running progress=101",
            "# cloudmesh status=done progress=99",
            "# cloudmesh  status=running progress=1",
            "# cloudmesh status=running progress=-1",
            "# cloudmesh status=running progress=99999999999999999999",
            "# cloudmesh status=running progress=42abc",
        ] {
            assert_eq!(parse_line(line), None, "{line}");
        }
    }

    #[test]
    fn last_match_wins() {
        let log = "hello\n# cloudmesh status=running progress=1 pid=3\nwork\n# cloudmesh status=running progress=42 pid=3\nmore output\n";
        let last = last_status(log).unwrap();
        assert_eq!(last.progress.value(), 42);
        assert_eq!(last_status(""), None);
        assert_eq!(last_status("no protocol here\n"), None);
    }

    #[test]
    fn formats_round_trip() {
        let line = status_line(Status::Killed, Progress::new(42).unwrap(), Some(9));
        assert_eq!(line, "# cloudmesh status=killed progress=42 pid=9");
        assert_eq!(parse_line(&line).unwrap().status, Status::Killed);
    }
}

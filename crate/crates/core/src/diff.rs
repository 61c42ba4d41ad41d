//! Line-based unified diffs with 3 lines of context.
//!
//! `unified_diff` renders δ_struct for evidence traces; `apply_patch` is the
//! independent reverse route used by trace verification: applying the emitted
//! hunks to the pre-pass text must reproduce the post-pass text exactly.

use similar::TextDiff;

use crate::error::{Error, Result};

const CONTEXT: usize = 3;

/// Unified diff of `before` → `after` with 3 context lines and bare
/// `--- before` / `+++ after` headers. Returns the empty string when the
/// inputs are identical.
pub fn unified_diff(before: &str, after: &str) -> String {
    if before == after {
        return String::new();
    }
    let diff = TextDiff::from_lines(before, after);
    let mut out = String::new();
    out.push_str("--- before\n");
    out.push_str("+++ after\n");
    for hunk in diff.unified_diff().context_radius(CONTEXT).iter_hunks() {
        out.push_str(&hunk.header().to_string());
        out.push('\n');
        for change in hunk.iter_changes() {
            let sign = match change.tag() {
                similar::ChangeTag::Delete => '-',
                similar::ChangeTag::Insert => '+',
                similar::ChangeTag::Equal => ' ',
            };
            out.push(sign);
            let value = change.value();
            out.push_str(value);
            if !value.ends_with('\n') {
                out.push('\n');
                // marker for a final line without trailing newline
                out.push_str("\\ No newline at end of file\n");
            }
        }
    }
    out
}

/// Apply a unified diff produced by [`unified_diff`] to `before`.
///
/// Deliberately strict: hunk bodies must match the source text exactly at the
/// stated offsets. This is a verification tool, not a fuzzy patcher.
pub fn apply_patch(before: &str, patch: &str) -> Result<String> {
    if patch.is_empty() {
        return Ok(before.to_string());
    }
    let src: Vec<&str> = split_keep_lines(before);
    let mut out: Vec<String> = Vec::with_capacity(src.len());
    let mut src_pos = 0usize; // next unconsumed source line (0-based)

    let mut lines = patch.lines().peekable();
    // headers are fixed by unified_diff
    for expect in ["--- ", "+++ "] {
        match lines.next() {
            Some(l) if l.starts_with(expect) => {}
            other => return Err(Error::Parse(format!("bad patch header: {other:?}"))),
        }
    }

    while let Some(line) = lines.next() {
        let (old_start, old_len) = parse_hunk_header(line)?;
        // copy untouched lines before the hunk
        let hunk_src_start = old_start.saturating_sub(1);
        if hunk_src_start < src_pos {
            return Err(Error::Parse("overlapping hunks".into()));
        }
        while src_pos < hunk_src_start {
            out.push(strip_newline(src[src_pos]).to_string());
            src_pos += 1;
        }
        let mut consumed = 0usize;
        while consumed < old_len || matches!(lines.peek(), Some(l) if l.starts_with('+')) {
            let Some(body) = lines.next() else {
                return Err(Error::Parse("truncated hunk".into()));
            };
            if body == "\\ No newline at end of file" {
                continue;
            }
            let (tag, text) = body.split_at(1);
            match tag {
                " " | "-" => {
                    let Some(src_line) = src.get(src_pos) else {
                        return Err(Error::Parse("hunk past end of input".into()));
                    };
                    if strip_newline(src_line) != text {
                        return Err(Error::Parse(format!(
                            "hunk context mismatch at line {}: {:?} vs {:?}",
                            src_pos + 1,
                            strip_newline(src_line),
                            text
                        )));
                    }
                    if tag == " " {
                        out.push(text.to_string());
                    }
                    src_pos += 1;
                    consumed += 1;
                }
                "+" => out.push(text.to_string()),
                other => return Err(Error::Parse(format!("bad hunk line tag {other:?}"))),
            }
        }
    }
    while src_pos < src.len() {
        out.push(strip_newline(src[src_pos]).to_string());
        src_pos += 1;
    }

    let mut result = out.join("\n");
    if before.ends_with('\n') || ends_with_newline_marker_absent(patch, before) {
        // preserve a trailing newline when the post-image has one
        if !result.is_empty() || before.ends_with('\n') {
            result.push('\n');
        }
    }
    Ok(result)
}

// The post-image ends with a newline unless the last +/context line in the
// patch was flagged with the no-newline marker.
fn ends_with_newline_marker_absent(patch: &str, _before: &str) -> bool {
    !patch.trim_end().ends_with("\\ No newline at end of file")
}

fn split_keep_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut lines = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(i) => {
                lines.push(&rest[..=i]);
                rest = &rest[i + 1..];
            }
            None => {
                lines.push(rest);
                break;
            }
        }
    }
    lines
}

fn strip_newline(line: &str) -> &str {
    line.strip_suffix('\n').unwrap_or(line)
}

/// `@@ -a,b +c,d @@` → (a, b)
fn parse_hunk_header(line: &str) -> Result<(usize, usize)> {
    let inner = line
        .strip_prefix("@@ -")
        .and_then(|l| l.split(" +").next())
        .ok_or_else(|| Error::Parse(format!("bad hunk header {line:?}")))?;
    let mut parts = inner.split(',');
    let start: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad hunk header {line:?}")))?;
    let len: usize = match parts.next() {
        Some(s) => s
            .parse()
            .map_err(|_| Error::Parse(format!("bad hunk header {line:?}")))?,
        None => 1,
    };
    Ok((start, len))
}

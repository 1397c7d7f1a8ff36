use std::sync::LazyLock;

use regex::Regex;

use crate::BenchError;

/// Code pulled out of a model answer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeExtraction {
    pub blocks: Vec<String>,
    /// No fences were present; blocks come from the line heuristic.
    pub heuristic: bool,
    /// The last fence was never closed.
    pub unterminated: bool,
}

impl CodeExtraction {
    pub fn notes(&self) -> Vec<&'static str> {
        let mut notes = Vec::new();
        if self.heuristic {
            notes.push("code found heuristically (no fences)");
        }
        if self.unterminated {
            notes.push("unterminated code fence");
        }
        notes
    }
}

static CODE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"^\s*(?:",
        r"(?:import|from)\s+[A-Za-z_]",                        // import
        r"|(?:def|class)\s+[A-Za-z_]\w*",                      // definition
        r"|[A-Za-z_][\w.]*(?:\[[^\]]*\])*\s*(?:[-+*/]?=)[^=]", // assignment
        r"|[A-Za-z_][\w.]*\(.*\)\s*:?\s*$",                    // call
        r")"
    ))
    .unwrap()
});

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

pub fn extract_code_blocks(output: &str) -> CodeExtraction {
    let mut out = CodeExtraction::default();
    let mut current: Option<Vec<&str>> = None;
    let mut saw_fence = false;
    for line in output.lines() {
        if is_fence(line) {
            saw_fence = true;
            match current.take() {
                Some(lines) => out.blocks.push(lines.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(lines) = current {
        out.unterminated = true;
        out.blocks.push(lines.join("\n"));
    }
    if saw_fence {
        return out;
    }

    let code: Vec<&str> = output.lines().filter(|l| CODE_LINE.is_match(l)).collect();
    if !code.is_empty() {
        out.heuristic = true;
        out.blocks.push(code.join("\n"));
    }
    out
}

pub fn count_code_lines<S: AsRef<str>>(blocks: &[S]) -> usize {
    blocks
        .iter()
        .flat_map(|b| b.as_ref().lines())
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .count()
}

/// 0–5 score: 5 × lines_ok / lines_total, rounded half up. No code scores 0.
pub fn score_from_line_fraction(lines_ok: usize, lines_total: usize) -> Result<u8, BenchError> {
    if lines_ok > lines_total {
        return Err(BenchError::LineCount { lines_ok, lines_total });
    }
    if lines_total == 0 {
        return Ok(0);
    }
    // floor(5·ok/total + 1/2) in integers.
    let score = (10 * lines_ok as u128 + lines_total as u128) / (2 * lines_total as u128);
    Ok(score as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fenced_block_extracted() {
        let got = extract_code_blocks("text\n```python\na=1\nb=2\n```\ntext");
        assert_eq!(got.blocks, ["a=1\nb=2"]);
        assert!(!got.heuristic && !got.unterminated);
    }

    #[test]
    fn two_blocks_in_order() {
        let got = extract_code_blocks("```\nx = 1\n```\nthen\n```py\ny = 2\nz()\n```\n");
        assert_eq!(got.blocks, ["x = 1", "y = 2\nz()"]);
    }

    #[test]
    fn prose_yields_nothing() {
        let got = extract_code_blocks("Open the Data module and drag the file in.\nThat is all.");
        assert_eq!(got, CodeExtraction::default());
        assert_eq!(extract_code_blocks("").blocks.len(), 0);
        // Mock-hash output is hex words, not code.
        assert!(extract_code_blocks("1a2b 03ff 9c0d ").blocks.is_empty());
    }

    #[test]
    fn unterminated_fence_runs_to_end() {
        let got = extract_code_blocks("intro\n```python\nimport slicer\nv = 1");
        assert_eq!(got.blocks, ["import slicer\nv = 1"]);
        assert!(got.unterminated);
        assert_eq!(got.notes(), ["unterminated code fence"]);
    }

    #[test]
    fn heuristic_without_fences() {
        let text = "You can do this:\nimport slicer\nvolume = slicer.util.loadVolume(path)\n\
                    slicer.util.setSliceViewerLayers(background=volume)\ndef f(x):\nThat's it.";
        let got = extract_code_blocks(text);
        assert!(got.heuristic);
        assert_eq!(
            got.blocks,
            ["import slicer\nvolume = slicer.util.loadVolume(path)\nslicer.util.setSliceViewerLayers(background=volume)\ndef f(x):"]
        );
        // Comparison is not assignment.
        assert!(extract_code_blocks("if a == b").blocks.is_empty());
    }

    #[test]
    fn line_counting() {
        assert_eq!(count_code_lines::<&str>(&[]), 0);
        assert_eq!(count_code_lines(&["a=1\n\n# comment\nb=2"]), 2);
        assert_eq!(count_code_lines(&["a\nb\nc", "  d\n\te\nf  "]), 6);
        assert_eq!(count_code_lines(&["   # indented comment\n   \n"]), 0);
    }

    #[test]
    fn anchor_scores() {
        assert_eq!(score_from_line_fraction(10, 10).unwrap(), 5);
        assert_eq!(score_from_line_fraction(2, 10).unwrap(), 1);
        assert_eq!(score_from_line_fraction(0, 0).unwrap(), 0);
        assert_eq!(score_from_line_fraction(1, 10).unwrap(), 1); // 0.5 rounds up
        assert_eq!(score_from_line_fraction(3, 10).unwrap(), 2); // 1.5 rounds up
        assert!(matches!(
            score_from_line_fraction(3, 2),
            Err(BenchError::LineCount { .. })
        ));
    }

    proptest! {
        #[test]
        fn score_matches_float_oracle(total in 1usize..5000, frac in 0.0f64..=1.0) {
            let ok = ((total as f64) * frac) as usize;
            let expect = (5.0 * ok as f64 / total as f64 + 0.5).floor() as u8;
            // Exact halves are representable, so the float oracle is safe here.
            prop_assert_eq!(score_from_line_fraction(ok, total).unwrap(), expect);
        }

        #[test]
        fn score_monotone(total in 1usize..2000) {
            let mut prev = 0;
            for ok in 0..=total {
                let s = score_from_line_fraction(ok, total).unwrap();
                prop_assert!(s >= prev && s <= 5);
                prev = s;
            }
            prop_assert_eq!(score_from_line_fraction(0, total).unwrap(), 0);
            prop_assert_eq!(score_from_line_fraction(total, total).unwrap(), 5);
        }
    }
}

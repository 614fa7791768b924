//! Line-oriented text format for segmented corpora.
//!
//! ```text
//! U <utterance_id> <speaker_id> <num_frames> <num_syllables>
//! F <log_pitch_mvn> <delta_log_pitch> <nccf_warped>     (× num_frames)
//! S <start> <final_start> <end> <tone>                  (× num_syllables)
//! ```
//!
//! Floats are written with nine significant digits, which round-trips the
//! values well inside 1e-7. Parse errors carry the 1-based line number;
//! structural violations (bad segment indices, overlaps, non-finite values)
//! are reported against the line that introduced them.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use tone_core::features::{FeatureError, FeatureFrame, SyllableSegment, ToneLabel, Utterance};

/// Errors from reading or writing corpus files.
#[derive(Debug)]
pub enum CorpusError {
    Io(io::Error),
    /// A malformed line; the message says what was expected.
    Parse { line: usize, what: String },
    /// A structurally invalid utterance, reported at the offending line.
    Invalid { line: usize, source: FeatureError },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Io(e) => write!(f, "{e}"),
            CorpusError::Parse { line, what } => write!(f, "line {line}: {what}"),
            CorpusError::Invalid { line, source } => write!(f, "line {line}: {source}"),
        }
    }
}

impl std::error::Error for CorpusError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CorpusError::Io(e) => Some(e),
            CorpusError::Invalid { source, .. } => Some(source),
            CorpusError::Parse { .. } => None,
        }
    }
}

impl From<io::Error> for CorpusError {
    fn from(e: io::Error) -> Self {
        CorpusError::Io(e)
    }
}

/// Writes a corpus in the line-oriented text format.
pub fn write_corpus(path: &Path, corpus: &[Utterance]) -> Result<(), CorpusError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for (id, utt) in corpus.iter().enumerate() {
        writeln!(
            out,
            "U {id} {} {} {}",
            utt.speaker_id,
            utt.frames.len(),
            utt.syllables.len()
        )?;
        for fr in &utt.frames {
            writeln!(
                out,
                "F {:.8e} {:.8e} {:.8e}",
                fr.log_pitch_mvn, fr.delta_log_pitch, fr.nccf_warped
            )?;
        }
        for seg in &utt.syllables {
            writeln!(
                out,
                "S {} {} {} {}",
                seg.start_frame, seg.final_start_frame, seg.end_frame, seg.tone
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus, re-validating every utterance invariant.
pub fn read_corpus(path: &Path) -> Result<Vec<Utterance>, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text)
}

/// Parses corpus text; line numbers in errors are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<Utterance>, CorpusError> {
    let mut lines = text.lines().enumerate().peekable();
    let mut corpus = Vec::new();

    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let header_line = lineno;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("U") => {}
            _ => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    what: format!("expected utterance header 'U ...', got {line:?}"),
                });
            }
        }
        let _utterance_id: u64 = parse_field(fields.next(), "utterance id", lineno)?;
        let speaker_id: String = match fields.next() {
            Some(s) => s.to_string(),
            None => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    what: "missing speaker id".to_string(),
                });
            }
        };
        let num_frames: usize = parse_field(fields.next(), "frame count", lineno)?;
        let num_syllables: usize = parse_field(fields.next(), "syllable count", lineno)?;
        expect_end(fields, lineno)?;

        let mut frames = Vec::with_capacity(num_frames);
        for _ in 0..num_frames {
            let (idx, line) = lines.next().ok_or(CorpusError::Parse {
                line: header_line,
                what: format!("utterance truncated: expected {num_frames} frame lines"),
            })?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            if fields.next() != Some("F") {
                return Err(CorpusError::Parse {
                    line: lineno,
                    what: format!("expected frame line 'F ...', got {line:?}"),
                });
            }
            let a: f64 = parse_field(fields.next(), "log-pitch value", lineno)?;
            let b: f64 = parse_field(fields.next(), "delta value", lineno)?;
            let c: f64 = parse_field(fields.next(), "nccf value", lineno)?;
            expect_end(fields, lineno)?;
            frames.push(FeatureFrame::new(a, b, c));
        }

        let mut syllables = Vec::with_capacity(num_syllables);
        for _ in 0..num_syllables {
            let (idx, line) = lines.next().ok_or(CorpusError::Parse {
                line: header_line,
                what: format!("utterance truncated: expected {num_syllables} syllable lines"),
            })?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            if fields.next() != Some("S") {
                return Err(CorpusError::Parse {
                    line: lineno,
                    what: format!("expected syllable line 'S ...', got {line:?}"),
                });
            }
            let start: usize = parse_field(fields.next(), "start frame", lineno)?;
            let final_start: usize = parse_field(fields.next(), "final-start frame", lineno)?;
            let end: usize = parse_field(fields.next(), "end frame", lineno)?;
            let tone_raw: u8 = parse_field(fields.next(), "tone label", lineno)?;
            expect_end(fields, lineno)?;
            let tone = ToneLabel::new(tone_raw)
                .map_err(|source| CorpusError::Invalid { line: lineno, source })?;
            let seg = SyllableSegment::new(start, final_start, end, tone)
                .map_err(|source| CorpusError::Invalid { line: lineno, source })?;
            syllables.push(seg);
        }

        let utt = Utterance::new(speaker_id, frames, syllables)
            .map_err(|source| CorpusError::Invalid {
                line: header_line,
                source,
            })?;
        corpus.push(utt);
    }
    Ok(corpus)
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    what: &str,
    line: usize,
) -> Result<T, CorpusError> {
    let raw = field.ok_or_else(|| CorpusError::Parse {
        line,
        what: format!("missing {what}"),
    })?;
    raw.parse().map_err(|_| CorpusError::Parse {
        line,
        what: format!("bad {what} {raw:?}"),
    })
}

fn expect_end<'a>(
    mut fields: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<(), CorpusError> {
    match fields.next() {
        None => Ok(()),
        Some(extra) => Err(CorpusError::Parse {
            line,
            what: format!("unexpected trailing field {extra:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tone_core::syncorpus::{generate, GeneratorSpec};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn round_trip_preserves_structure_and_values() {
        let spec = GeneratorSpec {
            n_train_syllables: 120,
            n_test_syllables: 10,
            ..GeneratorSpec::default()
        };
        let (corpus, _) = generate(&spec).unwrap();
        let dir = tmp();
        let path = dir.path().join("train.txt");
        write_corpus(&path, &corpus).unwrap();
        let back = read_corpus(&path).unwrap();

        assert_eq!(back.len(), corpus.len());
        for (a, b) in corpus.iter().zip(&back) {
            assert_eq!(a.speaker_id, b.speaker_id);
            assert_eq!(a.syllables, b.syllables, "structure must be exact");
            assert_eq!(a.frames.len(), b.frames.len());
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                for (va, vb) in fa.as_array().iter().zip(fb.as_array()) {
                    assert!((va - vb).abs() < 1e-7, "{va} vs {vb}");
                }
            }
        }
    }

    #[test]
    fn nine_significant_digits_round_trip_exactly_for_short_values() {
        // Values with a short decimal expansion survive bit-exactly.
        let utt = Utterance::new(
            "spk".into(),
            vec![FeatureFrame::new(0.125, -0.5, 0.9)],
            vec![SyllableSegment::new(0, 0, 1, ToneLabel::new(1).unwrap()).unwrap()],
        )
        .unwrap();
        let dir = tmp();
        let path = dir.path().join("c.txt");
        write_corpus(&path, &[utt.clone()]).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back[0].frames[0], utt.frames[0]);
    }

    #[test]
    fn hand_written_two_syllable_file_parses_field_by_field() {
        let text = "\
U 0 spk07 5 2
F 1.0e0 0.0e0 9.0e-1
F 2.5e-1 -1.0e-1 8.0e-1
F 5.0e-1 2.0e-1 8.5e-1
F -3.0e-1 1.0e-1 9.5e-1
F 0.0e0 0.0e0 9.0e-1
S 0 1 3 2
S 3 4 5 0
";
        let corpus = parse_corpus(text).unwrap();
        assert_eq!(corpus.len(), 1);
        let utt = &corpus[0];
        assert_eq!(utt.speaker_id, "spk07");
        assert_eq!(utt.frames.len(), 5);
        assert_eq!(utt.frames[0], FeatureFrame::new(1.0, 0.0, 0.9));
        assert_eq!(utt.frames[1], FeatureFrame::new(0.25, -0.1, 0.8));
        assert_eq!(utt.frames[4], FeatureFrame::new(0.0, 0.0, 0.9));
        assert_eq!(utt.syllables.len(), 2);
        assert_eq!(utt.syllables[0].start_frame, 0);
        assert_eq!(utt.syllables[0].final_start_frame, 1);
        assert_eq!(utt.syllables[0].end_frame, 3);
        assert_eq!(utt.syllables[0].tone, ToneLabel::new(2).unwrap());
        assert_eq!(utt.syllables[1].start_frame, 3);
        assert_eq!(utt.syllables[1].end_frame, 5);
        assert_eq!(utt.syllables[1].tone, ToneLabel::new(0).unwrap());
    }

    #[test]
    fn truncated_file_names_the_line() {
        let text = "\
U 0 spk 3 1
F 1.0e0 0.0e0 9.0e-1
F 1.0e0 0.0e0 9.0e-1
";
        let err = parse_corpus(text).unwrap_err();
        match err {
            CorpusError::Parse { line, what } => {
                assert_eq!(line, 1, "truncation reported against the header");
                assert!(what.contains("truncated"), "{what:?}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_numbers() {
        // Bad float on line 2.
        let err = parse_corpus("U 0 spk 1 0\nF x 0.0 0.9\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");

        // Wrong tag on line 2.
        let err = parse_corpus("U 0 spk 1 0\nG 0.0 0.0 0.9\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");

        // Trailing junk on line 1.
        let err = parse_corpus("U 0 spk 0 0 extra\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }), "{err}");

        // Missing something entirely.
        let err = parse_corpus("F 0.0 0.0 0.9\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn invariant_violations_are_line_numbered() {
        // Syllable segment with final_start >= end, on line 3.
        let text = "U 0 spk 1 1\nF 0.0e0 0.0e0 9.0e-1\nS 0 1 1 2\n";
        let err = parse_corpus(text).unwrap_err();
        match err {
            CorpusError::Invalid { line, .. } => assert_eq!(line, 3),
            other => panic!("expected invalid-structure error, got {other}"),
        }

        // Tone out of range, on line 3.
        let text = "U 0 spk 1 1\nF 0.0e0 0.0e0 9.0e-1\nS 0 0 1 7\n";
        let err = parse_corpus(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invalid { line: 3, .. }), "{err}");

        // Segment past the frame count: reported against the utterance.
        let text = "U 0 spk 1 1\nF 0.0e0 0.0e0 9.0e-1\nS 0 1 4 2\n";
        let err = parse_corpus(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invalid { line: 1, .. }), "{err}");

        // Non-finite frame value: also structural.
        let text = "U 0 spk 1 0\nF inf 0.0e0 9.0e-1\n";
        let err = parse_corpus(text).unwrap_err();
        assert!(matches!(err, CorpusError::Invalid { line: 1, .. }), "{err}");
    }

    #[test]
    fn empty_text_parses_to_empty_corpus() {
        assert!(parse_corpus("").unwrap().is_empty());
        assert!(parse_corpus("\n\n").unwrap().is_empty());
    }

    #[test]
    fn missing_file_reports_io_error() {
        let err = read_corpus(Path::new("/nonexistent/corpus.txt")).unwrap_err();
        assert!(matches!(err, CorpusError::Io(_)));
    }
}

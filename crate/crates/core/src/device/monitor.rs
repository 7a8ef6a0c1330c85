//! Host-side service loop for IO, string and math requests.

use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::Serialize;

use crate::scalar::format_real;
use crate::vm::{MonitorCommand, MonitorReply};
use crate::CoreId;

/// One printed line, tagged with the core that printed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptLine {
    pub core: CoreId,
    pub text: String,
}

impl std::fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.core, self.text)
    }
}

struct State {
    transcript: Vec<TranscriptLine>,
    errors: Vec<(CoreId, String)>,
    input: Box<dyn BufRead + Send>,
    echo: Option<Box<dyn Write + Send>>,
    serviced: u64,
}

/// Commands are serviced one at a time in arrival order, so lines from one
/// core keep their order and lines never interleave mid-text.
pub struct Monitor {
    state: Mutex<State>,
}

impl std::fmt::Debug for Monitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor").finish_non_exhaustive()
    }
}

impl Monitor {
    /// `input` feeds `input()` calls; `echo`, when set, receives each
    /// transcript line as it is produced.
    pub fn new(input: Box<dyn BufRead + Send>, echo: Option<Box<dyn Write + Send>>) -> Monitor {
        Monitor {
            state: Mutex::new(State { transcript: Vec::new(), errors: Vec::new(), input, echo, serviced: 0 }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn service(&self, core: CoreId, cmd: MonitorCommand) -> Result<MonitorReply, String> {
        let mut st = self.lock();
        st.serviced += 1;
        match cmd {
            MonitorCommand::Print(text) => {
                st.emit(TranscriptLine { core, text });
                Ok(MonitorReply::Done)
            }
            MonitorCommand::Input(prompt) => {
                if let Some(p) = prompt {
                    st.emit(TranscriptLine { core, text: p });
                }
                let mut line = String::new();
                match st.input.read_line(&mut line) {
                    Ok(0) => Err("end of input".into()),
                    Ok(_) => {
                        let trimmed = line.trim_end_matches(['\n', '\r']);
                        Ok(MonitorReply::Text(trimmed.as_bytes().to_vec()))
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            MonitorCommand::StrCat(mut a, b) => {
                a.extend_from_slice(&b);
                Ok(MonitorReply::Text(a))
            }
            MonitorCommand::Math(f, args) => {
                if args.len() != f.arity() {
                    return Err(format!("{} takes {} arguments, got {}", f.name(), f.arity(), args.len()));
                }
                f.apply(&args).map(MonitorReply::Real).map_err(|e| e.to_string())
            }
            MonitorCommand::FormatReal(r) => Ok(MonitorReply::Text(format_real(r).into_bytes())),
            MonitorCommand::Fatal(msg) => {
                st.errors.push((core, msg));
                Ok(MonitorReply::Done)
            }
        }
    }

    pub fn transcript(&self) -> Vec<TranscriptLine> {
        self.lock().transcript.clone()
    }

    /// Fatal errors reported by cores, in arrival order.
    pub fn errors(&self) -> Vec<(CoreId, String)> {
        self.lock().errors.clone()
    }

    pub fn serviced(&self) -> u64 {
        self.lock().serviced
    }
}

impl State {
    fn emit(&mut self, line: TranscriptLine) {
        if let Some(out) = &mut self.echo {
            // echo is best effort; the transcript keeps the line regardless
            let _ = writeln!(out, "{line}");
            let _ = out.flush();
        }
        self.transcript.push(line);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::MathFn;

    fn monitor(input: &str) -> Monitor {
        Monitor::new(Box::new(std::io::Cursor::new(input.as_bytes().to_vec())), None)
    }

    #[test]
    fn print_is_tagged_with_core_id() {
        let m = monitor("");
        m.service(3, MonitorCommand::Print("Hello".into())).unwrap();
        assert_eq!(m.transcript()[0].to_string(), "[3] Hello");
    }

    #[test]
    fn math_and_strcat() {
        let m = monitor("");
        let MonitorReply::Real(r) = m.service(0, MonitorCommand::Math(MathFn::Sqrt, vec![2.0])).unwrap() else {
            panic!()
        };
        assert_eq!(format!("{r:.6}"), "1.414214");
        assert_eq!(r, 2.0f32.sqrt());
        let cat = m.service(0, MonitorCommand::StrCat(b"a".to_vec(), b"b".to_vec())).unwrap();
        assert_eq!(cat, MonitorReply::Text(b"ab".to_vec()));
        assert!(m.service(0, MonitorCommand::Math(MathFn::Sqrt, vec![-1.0])).is_err());
    }

    #[test]
    fn input_lines_are_served_in_order_then_eof() {
        let m = monitor("first\nsecond\n");
        assert_eq!(m.service(1, MonitorCommand::Input(None)).unwrap(), MonitorReply::Text(b"first".to_vec()));
        assert_eq!(m.service(2, MonitorCommand::Input(Some("? ".into()))).unwrap(), MonitorReply::Text(b"second".to_vec()));
        assert_eq!(m.transcript()[0].to_string(), "[2] ? ");
        assert!(m.service(1, MonitorCommand::Input(None)).is_err());
    }
}

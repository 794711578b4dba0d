use thiserror::Error;

/// One newline-terminated line sent back by the Hybrid Controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    /// `<value> <id>` answer to a single-element read.
    Value { value: f64, id: String },
    /// `;`-joined values of the readout group.
    Bulk(Vec<f64>),
    /// `? <code>`. The message stays local; only the code goes on the wire.
    Error { code: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResponseError {
    #[error("malformed number {0:?}")]
    BadNumber(String),
    #[error("malformed response line {0:?}")]
    Malformed(String),
}

impl Response {
    pub fn error(code: impl Into<String>, message: impl Into<String>) -> Self {
        Response::Error { code: code.into(), message: message.into() }
    }

    /// Wire form with numbers printed to `decimals` places.
    pub fn to_wire(&self, decimals: usize) -> String {
        match self {
            Response::Value { value, id } => format!("{value:.decimals$} {id}\n"),
            Response::Bulk(values) => {
                let mut line = values
                    .iter()
                    .map(|v| format!("{v:.decimals$}"))
                    .collect::<Vec<_>>()
                    .join(";");
                line.push('\n');
                line
            }
            Response::Error { code, .. } => format!("? {code}\n"),
        }
    }

    /// Parses one line; a trailing `\n` (or `\r\n`) is optional.
    pub fn parse(line: &str) -> Result<Self, ResponseError> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        if let Some(code) = line.strip_prefix("? ") {
            return Ok(Response::error(code.trim(), ""));
        }
        if line.is_empty() {
            return Ok(Response::Bulk(Vec::new()));
        }
        if let Some((value, id)) = line.split_once(' ') {
            if id.is_empty() || id.contains(' ') || id.contains(';') {
                return Err(ResponseError::Malformed(line.to_string()));
            }
            return Ok(Response::Value { value: number(value)?, id: id.to_string() });
        }
        line.split(';').map(number).collect::<Result<_, _>>().map(Response::Bulk)
    }
}

fn number(s: &str) -> Result<f64, ResponseError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ResponseError::BadNumber(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_line() {
        assert_eq!(
            Response::parse("0.5000 0223\n"),
            Ok(Response::Value { value: 0.5, id: "0223".into() })
        );
        assert_eq!(
            Response::Value { value: 0.1235, id: "0223".into() }.to_wire(4),
            "0.1235 0223\n"
        );
    }

    #[test]
    fn bulk_line() {
        assert_eq!(
            Response::parse("0.1;-0.2;0.05;0.0\n"),
            Ok(Response::Bulk(vec![0.1, -0.2, 0.05, 0.0]))
        );
        assert_eq!(Response::Bulk(vec![]).to_wire(4), "\n");
        assert_eq!(Response::parse("\n"), Ok(Response::Bulk(vec![])));
        assert_eq!(Response::parse("0.5\n"), Ok(Response::Bulk(vec![0.5])));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(Response::parse("foo 0223\n").is_err());
        assert!(Response::parse("0.1;;0.2\n").is_err());
        assert!(Response::parse("inf;0\n").is_err());
        assert!(Response::parse("0.1 a b\n").is_err());
    }

    #[test]
    fn error_frames() {
        assert_eq!(Response::error("busy", "machine in use").to_wire(4), "? busy\n");
        assert_eq!(Response::parse("? busy\n"), Ok(Response::error("busy", "")));
    }
}

use serde::Serialize;

/// Why a command stopped; every variant maps to an exit code and a reason.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Bad flags or config; `field` is the config path when known.
    Usage { field: Option<String>, message: String },
    /// The library refused the computation.
    Refusal(upressure::Error),
    /// A hard invariant failed; the named checks are in the written report.
    HardCheck(Vec<String>),
    Io(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REFUSAL: i32 = 3;
pub const EXIT_HARD_CHECK: i32 = 4;

#[derive(Serialize)]
struct ErrorLine<'a> {
    status: &'static str,
    exit_code: i32,
    reason: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failed: Vec<&'a str>,
    message: String,
}

impl Failure {
    pub fn usage(field: Option<String>, message: String) -> Self {
        Failure::Usage { field, message }
    }

    /// A library error raised while validating the config field `path`.
    pub fn field(path: &str, e: upressure::Error) -> Self {
        Failure::Usage {
            field: Some(path.to_string()),
            message: format!("{} ({})", e, e.reason_code()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage { .. } => EXIT_USAGE,
            Failure::Refusal(_) => EXIT_REFUSAL,
            Failure::HardCheck(_) => EXIT_HARD_CHECK,
            Failure::Io(_) => EXIT_IO,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            Failure::Usage { .. } => "usage",
            Failure::Refusal(e) => e.reason_code(),
            Failure::HardCheck(_) => "hard-check-failed",
            Failure::Io(_) => "io",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let (field, failed, message) = match self {
            Failure::Usage { field, message } => (field.as_deref(), vec![], message.clone()),
            Failure::Refusal(e) => (None, vec![], e.to_string()),
            Failure::HardCheck(names) => (
                None,
                names.iter().map(String::as_str).collect(),
                format!("{} hard check(s) failed", names.len()),
            ),
            Failure::Io(m) => (None, vec![], m.clone()),
        };
        serde_json::to_string(&ErrorLine {
            status: "error",
            exit_code: self.exit_code(),
            reason: self.reason(),
            field,
            failed,
            message,
        })
        .expect("error line serializes")
    }
}

impl From<upressure::Error> for Failure {
    fn from(e: upressure::Error) -> Self {
        Failure::Refusal(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

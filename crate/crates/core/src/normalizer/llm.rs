//! Chat-completion client for model-assisted report rewriting.
//!
//! The request carries the rewriting instructions as the system message and
//! the report as the user message, at temperature 0. The reply is expected to
//! contain a JSON object with `standard_report`, `conclusion` and
//! `recommendation` (plus `question1`..`answer2` when Q&A generation is
//! requested).

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::refine::violations;
use super::{RefinementRules, StructuredReport};

pub const REFINE_PROMPT: &str = r#"You are skillful radiologist and doing summarization of chest x-ray report.
Summarize these information from the report.
Answer to each questions as json format which have "standard report", "conclusion" and "recommendation" as keys.

1. "standard_report" : Write a standardized radiologic report as one paragraph. Standardized report must include information about abnormality of lungs, mediastinum, heart and thorax.
2. "conclusion" : What is the conclusion or impression of the radiologic report? Include only critical information.
3. "recommendation" : Should additional radiologic study needed? What type of study should be performed?

Do not include any temporal or time information in standard_report and conclusion. DO NOT USE WORD SUCH AS "new", "previous", "comparison", "stable", "improved", "improving", "decreased", "increased", "changed", "unchanged", "resolved", or "cleared".
Do not include information about 'comparison with prior study'.
Do not include information about lateral radiograph.
Replace any numeric information, such as millimeter or centimeter
Remove any information about patient age, gender, and medical history.
Remove any under-bar & blank.
Remove any information or location about catheter, chest tube, endotracheal tube, PICC, chemoport, central line, nasogastric tube or other medical devices."#;

pub const QA_PROMPT: &str = r#""question1" : Compose a question from the perspective of a student radiologist, inquiring about the anatomical location, number, or presence of pathology in the chest radiograph.
"answer1" : Write an informative answer to question1.
"question2" : Compose a question that asks possible differential diagnoses from this chest radiograph, without referring to the patient's history.
"answer2" : Write an informative answer to question2."#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineEndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    #[serde(default)]
    pub qa: bool,
}

impl RefineEndpointConfig {
    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn prompt(&self) -> String {
        if self.qa {
            format!("{REFINE_PROMPT}\n\n{QA_PROMPT}")
        } else {
            REFINE_PROMPT.to_string()
        }
    }

    pub fn request_body(&self, report_text: &str) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": self.prompt()},
                {"role": "user", "content": report_text},
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedReport {
    pub standard_report: String,
    pub conclusion: String,
    pub recommendation: String,
    pub qa_pairs: Vec<QaPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRefinement {
    pub id: String,
    pub refined: RefinedReport,
    /// Rule violations found in the returned text; reported, not fatal.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {excerpt}")]
    BadStatus { status: u16, excerpt: String },
    #[error("response schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-JSON transport so the client can be exercised without a network.
pub trait ChatTransport: Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, LlmError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport;

impl ChatTransport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, LlmError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("content-type", "application/json");
        if let Some(token) = bearer {
            req = req.header("authorization", &format!("Bearer {token}"));
        }
        let payload = serde_json::to_vec(body).map_err(|e| LlmError::Transport(e.to_string()))?;
        let mut resp = req
            .send(&payload[..])
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

const EXCERPT_LEN: usize = 200;

/// Send one report to the endpoint and parse the rewritten fields.
pub fn llm_refine(
    report: &StructuredReport,
    config: &RefineEndpointConfig,
    transport: &dyn ChatTransport,
) -> Result<LlmRefinement, LlmError> {
    let token = std::env::var(&config.token_env).ok();
    let body = config.request_body(&report.to_text());
    let reply = transport.post_json(
        &config.url(),
        token.as_deref(),
        &body,
        Duration::from_secs(config.timeout_secs),
    )?;
    if !(200..300).contains(&reply.status) {
        let excerpt: String = reply.body.chars().take(EXCERPT_LEN).collect();
        return Err(LlmError::BadStatus {
            status: reply.status,
            excerpt,
        });
    }
    let refined = parse_payload(&reply.body, config.qa)?;
    let warnings = check(&refined);
    Ok(LlmRefinement {
        id: report.id.clone(),
        refined,
        warnings,
    })
}

/// Refine many reports with at most `max_in_flight` concurrent requests.
/// Results come back in input order.
pub fn llm_refine_many(
    reports: &[StructuredReport],
    config: &RefineEndpointConfig,
    transport: &dyn ChatTransport,
    max_in_flight: usize,
) -> Vec<Result<LlmRefinement, LlmError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        reports
            .par_iter()
            .map(|r| llm_refine(r, config, transport))
            .collect()
    })
}

fn check(refined: &RefinedReport) -> Vec<String> {
    let rules = RefinementRules::default();
    let mut warnings = Vec::new();
    for (field, text) in [
        ("standard_report", &refined.standard_report),
        ("conclusion", &refined.conclusion),
    ] {
        for hit in violations(text, &rules) {
            warnings.push(format!("{field} contains forbidden term `{hit}`"));
        }
    }
    warnings
}

/// Extract the JSON payload from a reply body.
///
/// Accepts a chat-completion envelope (`choices[0].message.content` holding
/// the JSON, optionally inside a code fence) or a bare payload object.
pub fn parse_payload(body: &str, qa: bool) -> Result<RefinedReport, LlmError> {
    let outer: Value = serde_json::from_str(body.trim())
        .map_err(|_| LlmError::Schema("response body is not JSON".into()))?;
    let payload = match outer.pointer("/choices/0/message/content") {
        Some(Value::String(content)) => {
            let inner = strip_fence(content);
            serde_json::from_str::<Value>(inner)
                .map_err(|_| LlmError::Schema("message content is not a JSON object".into()))?
        }
        Some(_) => return Err(LlmError::Schema("message content is not a string".into())),
        None => outer,
    };
    let Value::Object(obj) = payload else {
        return Err(LlmError::Schema("payload is not a JSON object".into()));
    };
    let standard_report = field(&obj, &["standard_report", "standard report"])?;
    let conclusion = field(&obj, &["conclusion"])?;
    let recommendation = field(&obj, &["recommendation"])?;
    let qa_pairs = if qa {
        vec![
            QaPair {
                question: field(&obj, &["question1"])?,
                answer: field(&obj, &["answer1"])?,
            },
            QaPair {
                question: field(&obj, &["question2"])?,
                answer: field(&obj, &["answer2"])?,
            },
        ]
    } else {
        Vec::new()
    };
    Ok(RefinedReport {
        standard_report,
        conclusion,
        recommendation,
        qa_pairs,
    })
}

fn field(obj: &Map<String, Value>, names: &[&str]) -> Result<String, LlmError> {
    for name in names {
        match obj.get(*name) {
            Some(Value::String(s)) => return Ok(s.clone()),
            Some(_) => return Err(LlmError::Schema(format!("key `{name}` is not a string"))),
            None => {}
        }
    }
    Err(LlmError::Schema(format!("missing key `{}`", names[0])))
}

fn strip_fence(content: &str) -> &str {
    let t = content.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalizer::extract_sections;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Mutex;

    struct Canned {
        status: u16,
        body: String,
        seen: Mutex<Vec<Value>>,
    }

    impl Canned {
        fn new(status: u16, body: &str) -> Self {
            Canned {
                status,
                body: body.to_string(),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl ChatTransport for Canned {
        fn post_json(
            &self,
            _: &str,
            _: Option<&str>,
            body: &Value,
            _: Duration,
        ) -> Result<HttpReply, LlmError> {
            self.seen.lock().unwrap().push(body.clone());
            Ok(HttpReply {
                status: self.status,
                body: self.body.clone(),
            })
        }
    }

    fn config(qa: bool) -> RefineEndpointConfig {
        RefineEndpointConfig {
            base_url: "http://localhost:1/v1/".into(),
            model: "m".into(),
            timeout_secs: 5,
            token_env: "CXREVAL_TEST_TOKEN_UNSET".into(),
            qa,
        }
    }

    fn report() -> StructuredReport {
        extract_sections("r1", "Findings: Small left effusion. Impression: Effusion.").unwrap()
    }

    fn envelope(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn minimal_payload_parses() {
        let t = Canned::new(
            200,
            &envelope(
                r#"{"standard_report":"Small left pleural effusion.","conclusion":"Effusion.","recommendation":"None."}"#,
            ),
        );
        let out = llm_refine(&report(), &config(false), &t).unwrap();
        assert_eq!(out.refined.standard_report, "Small left pleural effusion.");
        assert!(out.refined.qa_pairs.is_empty());
        assert!(out.warnings.is_empty());

        let sent = &t.seen.lock().unwrap()[0];
        assert_eq!(sent["temperature"], 0);
        assert_eq!(sent["messages"][0]["content"], REFINE_PROMPT);
        assert_eq!(
            sent["messages"][1]["content"],
            "Findings: Small left effusion.\nImpression: Effusion."
        );
    }

    #[test]
    fn missing_key_is_schema_error() {
        let t = Canned::new(200, r#"{"standard_report":"a","recommendation":"c"}"#);
        let err = llm_refine(&report(), &config(false), &t).unwrap_err();
        assert!(
            matches!(err, LlmError::Schema(ref m) if m.contains("conclusion")),
            "{err}"
        );
    }

    #[test]
    fn prose_is_schema_error() {
        let t = Canned::new(200, &envelope("The report shows a small effusion."));
        assert!(matches!(
            llm_refine(&report(), &config(false), &t),
            Err(LlmError::Schema(_))
        ));
        let t = Canned::new(200, "Sorry, I cannot help.");
        assert!(matches!(
            llm_refine(&report(), &config(false), &t),
            Err(LlmError::Schema(_))
        ));
    }

    #[test]
    fn non_2xx_keeps_excerpt() {
        let t = Canned::new(503, &"x".repeat(1000));
        match llm_refine(&report(), &config(false), &t) {
            Err(LlmError::BadStatus { status, excerpt }) => {
                assert_eq!(status, 503);
                assert_eq!(excerpt.len(), EXCERPT_LEN);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn qa_fields_and_fences_and_warnings() {
        let content = "```json\n{\"standard report\":\"New opacity.\",\"conclusion\":\"c\",\"recommendation\":\"r\",\"question1\":\"q1\",\"answer1\":\"a1\",\"question2\":\"q2\",\"answer2\":\"a2\"}\n```";
        let t = Canned::new(200, &envelope(content));
        let out = llm_refine(&report(), &config(true), &t).unwrap();
        assert_eq!(out.refined.qa_pairs.len(), 2);
        assert_eq!(out.refined.qa_pairs[1].answer, "a2");
        assert_eq!(out.warnings.len(), 1);
        let sent = &t.seen.lock().unwrap()[0];
        assert!(sent["messages"][0]["content"]
            .as_str()
            .unwrap()
            .ends_with(QA_PROMPT));

        let t = Canned::new(
            200,
            r#"{"standard_report":"a","conclusion":"b","recommendation":"c","question1":"q"}"#,
        );
        assert!(matches!(
            llm_refine(&report(), &config(true), &t),
            Err(LlmError::Schema(_))
        ));
    }

    #[test]
    fn fields_come_from_payload_only() {
        let payload = json!({"standard_report": "s r", "conclusion": "c c", "recommendation": "r r", "extra": "x"});
        let out = parse_payload(&payload.to_string(), false).unwrap();
        for v in [&out.standard_report, &out.conclusion, &out.recommendation] {
            assert!(payload
                .as_object()
                .unwrap()
                .values()
                .any(|p| p.as_str() == Some(v.as_str())));
        }
    }

    #[test]
    fn many_preserves_order() {
        let t = Canned::new(
            200,
            r#"{"standard_report":"a","conclusion":"b","recommendation":"c"}"#,
        );
        let reports: Vec<_> = (0..6)
            .map(|i| extract_sections(&format!("r{i}"), "Lungs clear.").unwrap())
            .collect();
        let out = llm_refine_many(&reports, &config(false), &t, 3);
        let ids: Vec<_> = out.iter().map(|r| r.as_ref().unwrap().id.clone()).collect();
        assert_eq!(ids, ["r0", "r1", "r2", "r3", "r4", "r5"]);
    }

    #[test]
    fn http_transport_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let resp = envelope(r#"{"standard_report":"a","conclusion":"b","recommendation":"c"}"#);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                resp.len(),
                resp
            )
            .unwrap();
            (serde_json::from_slice::<Value>(&body).unwrap(), auth)
        });
        let reply = HttpTransport
            .post_json(
                &format!("http://{addr}/v1/chat/completions"),
                Some("secret"),
                &json!({"model": "m"}),
                Duration::from_secs(5),
            )
            .unwrap();
        assert_eq!(reply.status, 200);
        let (sent, auth) = server.join().unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(auth.to_ascii_lowercase(), "authorization: bearer secret");
        assert!(parse_payload(&reply.body, false).is_ok());
    }

    #[test]
    fn connection_refused_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = HttpTransport
            .post_json(
                &format!("http://{addr}/x"),
                None,
                &json!({}),
                Duration::from_secs(2),
            )
            .unwrap_err();
        assert!(matches!(err, LlmError::Transport(_)));
    }
}

use std::fmt::Write;

use super::report::{Coverage, SimReport};

/// One test suite with a case per persona plus a coverage case. A persona
/// fails when it breaks down, hits the turn cap, does not end or leaves a
/// continuing turn without a question.
pub fn junit_xml(reports: &[SimReport], coverage: &Coverage) -> String {
    let mut cases = Vec::new();
    for r in reports {
        let mut problems = Vec::new();
        if let Some(b) = &r.breakdown {
            problems.push(format!("breakdown: {b}"));
        }
        if r.turn_cap_exceeded {
            problems.push("turn cap exceeded".to_string());
        }
        if !r.ended_cleanly {
            problems.push("dialogue did not end".to_string());
        }
        for q in r.question_violations() {
            problems.push(format!("turn does not end with a question: {q}"));
        }
        cases.push((format!("persona.{}", r.persona_id), r.estimated_duration_s, problems));
    }
    let cov_problems = if coverage.uncovered.is_empty() {
        Vec::new()
    } else {
        vec![format!(
            "state coverage {:.3}; uncovered: {}",
            coverage.state_coverage,
            coverage.uncovered.iter().cloned().collect::<Vec<_>>().join(", ")
        )]
    };
    cases.push(("coverage".to_string(), 0.0, cov_problems));

    let failures = cases.iter().filter(|c| !c.2.is_empty()).count();
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        xml,
        "<testsuite name=\"simulate-pack\" tests=\"{}\" failures=\"{failures}\" errors=\"0\">",
        cases.len()
    );
    for (name, seconds, problems) in &cases {
        let _ = write!(xml, "  <testcase classname=\"tourflow.sim\" name=\"{}\" time=\"{seconds:.1}\"", escape(name));
        if problems.is_empty() {
            xml.push_str("/>\n");
        } else {
            let _ = writeln!(
                xml,
                ">\n    <failure message=\"{}\">{}</failure>\n  </testcase>",
                escape(&problems[0]),
                escape(&problems.join("\n"))
            );
        }
    }
    xml.push_str("</testsuite>\n");
    xml
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn failure_and_escaping() {
        let r = SimReport {
            persona_id: "a<b".into(),
            transcript: vec![],
            turns: 0,
            estimated_duration_s: 1.25,
            visited_states: BTreeSet::new(),
            ended_cleanly: false,
            turn_cap_exceeded: true,
            breakdown: None,
        };
        let cov = Coverage {
            state_coverage: 1.0,
            uncovered: BTreeSet::new(),
        };
        let xml = junit_xml(&[r], &cov);
        assert!(xml.contains("tests=\"2\" failures=\"1\""));
        assert!(xml.contains("persona.a&lt;b"));
        assert!(xml.contains("turn cap exceeded"));
        assert!(xml.contains("name=\"coverage\" time=\"0.0\"/>"));
    }
}

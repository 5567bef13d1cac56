use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub expected: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub pass: bool,
}

/// JSON report: free-form fields plus a list of pass/fail checks.
#[derive(Debug)]
pub struct Report {
    command: String,
    fields: Map<String, Value>,
    checks: Vec<Check>,
}

fn json<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            fields: Map::new(),
            checks: Vec::new(),
        }
    }

    pub fn set<T: Serialize>(&mut self, key: &str, value: T) -> &mut Self {
        self.fields.insert(key.to_string(), json(value));
        self
    }

    pub fn check_close(&mut self, name: &str, value: f64, expected: f64, tol: f64) -> bool {
        let pass = value.is_finite() && (value - expected).abs() <= tol;
        self.checks.push(Check {
            name: name.to_string(),
            value: json(value),
            expected: json(expected),
            tol: Some(tol),
            pass,
        });
        pass
    }

    /// `value ≤ tol`, for deviations and residuals.
    pub fn check_small(&mut self, name: &str, value: f64, tol: f64) -> bool {
        self.check_close(name, value, 0.0, tol)
    }

    pub fn check_eq<T: Serialize + PartialEq>(&mut self, name: &str, value: T, expected: T) -> bool {
        let pass = value == expected;
        self.checks.push(Check {
            name: name.to_string(),
            value: json(value),
            expected: json(expected),
            tol: None,
            pass,
        });
        pass
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn to_json(&self) -> String {
        let mut root = Map::new();
        root.insert("command".into(), json(&self.command));
        for (k, v) in &self.fields {
            root.insert(k.clone(), v.clone());
        }
        root.insert("checks".into(), json(&self.checks));
        root.insert("pass".into(), json(self.passed()));
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_check_fails_report() {
        let mut r = Report::new("t");
        assert!(r.check_close("a", 1.0, 1.0 + 1e-13, 1e-12));
        assert!(r.passed());
        assert!(!r.check_eq("b", 1, 2));
        assert!(!r.passed());
        assert!(!r.check_close("nan", f64::NAN, 0.0, 1.0));
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["pass"], false);
        assert_eq!(v["checks"].as_array().unwrap().len(), 3);
    }
}

use std::fmt::Write;

pub trait Describe {
    fn name(&self) -> String;

    fn describe(&self) -> String {
        format!("<{}>", self.name())
    }
}

pub struct Report {
    pub values: Vec<i64>,
}

impl Describe for Report {
    fn name(&self) -> String {
        format!("report of {}", self.values.len())
    }
}

pub fn render(r: &Report) -> String {
    let mut out = r.describe();
    match mathx::stats::mean(&r.values) {
        Some(m) => write!(out, " mean={m:.2}").unwrap(),
        None => out.push_str(" empty"),
    }
    write!(out, " ss={}", mathx::stats::sum_of_squares(&r.values)).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders() {
        let r = Report { values: vec![1, 2, 3] };
        assert_eq!(render(&r), "<report of 3> mean=2.00 ss=14");
    }

    #[test]
    fn renders_empty() {
        let r = Report { values: vec![] };
        assert_eq!(render(&r), "<report of 0> empty ss=0");
    }
}

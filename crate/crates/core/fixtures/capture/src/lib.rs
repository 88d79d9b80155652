use std::fmt::Debug;
use std::fs::File;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
    pub label: String,
}

pub fn primitive(x: i32) -> i32 {
    x * 2
}

pub fn aggregate(p: Point) -> Point {
    Point {
        x: p.y,
        y: p.x,
        label: p.label,
    }
}

pub fn handle(file: &File) -> bool {
    file.metadata().is_ok()
}

pub fn generic<T: Clone + Debug>(value: T) -> T
where
    T: Default + PartialEq,
{
    if value == T::default() {
        T::default()
    } else {
        value.clone()
    }
}

pub fn unit(n: u8) {
    let _ = n;
}

pub fn borrowed<'a>(words: &'a [String], idx: usize) -> &'a str {
    &words[idx]
}

pub fn boxed(f: Box<dyn Fn(i32) -> i32>) -> i32 {
    f(20)
}

pub fn iter(n: u32) -> impl Iterator<Item = u32> {
    0..n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn everything() {
        assert_eq!(primitive(4), 8);
        let p = Point { x: 1, y: 2, label: "p".into() };
        assert_eq!(aggregate(p).x, 2);
        assert!(handle(&File::open("Cargo.toml").unwrap()));
        assert_eq!(generic(5), 5);
        assert_eq!(generic(String::new()), "");
        unit(3);
        let words = vec!["a".to_string(), "b".to_string()];
        assert_eq!(borrowed(&words, 1), "b");
        assert_eq!(boxed(Box::new(|x| x + 1)), 21);
        assert_eq!(iter(3).sum::<u32>(), 3);
    }
}

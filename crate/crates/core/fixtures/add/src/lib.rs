pub fn add(a: i32, b: i32) -> i32 {
    a + b
}

pub fn sum(values: &[i32]) -> i32 {
    let mut total = 0;
    for v in values {
        total = add(total, *v);
    }
    total
}

pub struct Counter {
    count: u32,
}

impl Counter {
    pub fn new() -> Self {
        Counter { count: 0 }
    }

    pub fn bump(&mut self, by: u32) -> u32 {
        self.count += by;
        self.count
    }
}

impl Default for Counter {
    fn default() -> Self {
        Self::new()
    }
}

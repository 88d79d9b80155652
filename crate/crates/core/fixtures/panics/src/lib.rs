pub fn outer(depth: u32) -> u32 {
    let r = middle(depth);
    r + 1
}

pub fn middle(depth: u32) -> u32 {
    if depth > 2 {
        inner(depth)
    } else {
        depth
    }
}

pub fn inner(depth: u32) -> u32 {
    if depth > 5 {
        panic!("too deep: {depth}");
    }
    depth * 10
}

pub fn after() -> &'static str {
    "after"
}

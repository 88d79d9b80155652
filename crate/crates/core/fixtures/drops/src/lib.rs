use std::cell::RefCell;

thread_local! {
    static LOG: RefCell<Vec<String>> = const { RefCell::new(Vec::new()) };
}

pub fn log(event: impl Into<String>) {
    let event = event.into();
    println!("{event}");
    LOG.with(|l| l.borrow_mut().push(event));
}

pub fn take_log() -> Vec<String> {
    LOG.with(|l| std::mem::take(&mut *l.borrow_mut()))
}

#[derive(Debug)]
pub struct Noisy(pub &'static str);

impl Drop for Noisy {
    fn drop(&mut self) {
        log(format!("drop {}", self.0));
    }
}

pub fn consume(a: Noisy, b: Noisy) -> usize {
    let _local = Noisy("local");
    log("consume body");
    a.0.len() + b.0.len()
}

pub fn pass_through(a: Noisy, b: Noisy) -> Noisy {
    log("pass body");
    drop(b);
    a
}

pub fn early(flag: bool, _a: Noisy, b: Noisy) -> Option<Noisy> {
    if flag {
        return None;
    }
    let _guard = Noisy("guard");
    Some(b)
}

pub fn fallible(input: Result<Noisy, String>, keep: Noisy) -> Result<usize, String> {
    let value = input?;
    log(format!("got {}", value.0));
    Ok(keep.0.len())
}

pub fn ignore(_: Noisy, b: Noisy, _: Noisy) {
    log(format!("ignore body {}", b.0));
}

pub fn tuple_arg((a, b): (Noisy, Noisy), c: Noisy) {
    log(format!("tuple body {} {} {}", a.0, b.0, c.0));
}

pub fn borrow_first<'a>(items: &'a [Noisy], extra: Noisy) -> &'a Noisy {
    log(format!("borrow body {}", extra.0));
    &items[0]
}

pub struct Holder {
    pub inner: Noisy,
    pub other: Noisy,
}

impl Holder {
    pub fn into_inner(self, spare: Noisy) -> Noisy {
        log(format!("into_inner body {}", spare.0));
        self.inner
    }

    pub fn swap(&mut self, with: Noisy) -> Noisy {
        std::mem::replace(&mut self.other, with)
    }
}

pub fn explode(armed: Noisy, message: &str) -> usize {
    let _local = Noisy("explode local");
    if armed.0.is_empty() {
        return 0;
    }
    panic!("{message}")
}

pub fn scenario() -> Vec<String> {
    take_log();
    log(format!("consume -> {}", consume(Noisy("a1"), Noisy("b1"))));
    let kept = pass_through(Noisy("a2"), Noisy("b2"));
    log(format!("kept {}", kept.0));
    drop(kept);
    log(format!("early true -> {:?}", early(true, Noisy("a3"), Noisy("b3")).map(|n| n.0)));
    log(format!("early false -> {:?}", early(false, Noisy("a4"), Noisy("b4")).map(|n| n.0)));
    log(format!("fallible err -> {:?}", fallible(Err("bad".into()), Noisy("k1"))));
    log(format!("fallible ok -> {:?}", fallible(Ok(Noisy("v2")), Noisy("k2"))));
    ignore(Noisy("i1"), Noisy("i2"), Noisy("i3"));
    tuple_arg((Noisy("t1"), Noisy("t2")), Noisy("t3"));
    let items = vec![Noisy("item0"), Noisy("item1")];
    log(format!("borrowed {}", borrow_first(&items, Noisy("extra")).0));
    drop(items);
    let mut h = Holder {
        inner: Noisy("inner"),
        other: Noisy("other"),
    };
    let old = h.swap(Noisy("other2"));
    log(format!("swapped out {}", old.0));
    drop(old);
    let inner = h.into_inner(Noisy("spare"));
    log(format!("inner {}", inner.0));
    drop(inner);
    let caught = std::panic::catch_unwind(|| explode(Noisy("armed"), "boom"));
    log(format!("caught {}", caught.is_err()));
    take_log()
}

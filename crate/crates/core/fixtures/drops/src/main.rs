fn main() {
    let events = drops::scenario();
    println!("{} events", events.len());
}

fn main() {
    let mut c = add::Counter::new();
    c.bump(2);
    println!("{} {}", add::sum(&[4, 5, 6]), c.bump(1));
    eprintln!("done");
}

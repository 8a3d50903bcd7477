mod args;
mod cases;
mod report;

fn main() {
    eprintln!("finram: not yet wired up");
    std::process::exit(2);
}

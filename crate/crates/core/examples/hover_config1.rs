use monospinner::{default_guess, expand_design, solve_hover, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::load("configs/config1.toml".as_ref())?;
    let vehicle = expand_design(&config.base, &config.masses, &config.design)?;
    let hover = solve_hover(&vehicle, &default_guess(&vehicle))?;
    println!("P_s = {}", hover.power() / vehicle.weight());
    Ok(())
}

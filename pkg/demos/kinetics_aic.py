"""Score two hand-written Arrhenius kinetics models on the same data.

Model A carries small correction factors, model B is the tidy form. Both are
scored the way the selection step scores its candidates.
"""

from symode.expr import count_parameters, parse_text
from symode.select import aic_score, model_mse
from symode.systems import build_dataset, get_system, relative_rmse

MODELS = {
    "A": ("-0.07*alpha*exp(0.9*theta)*(1.014 + 0.171*theta)/(theta^0.1*exp(0.1*alpha)) + 0.1",
          "alpha*exp(0.9*theta)*(1.028 + 0.175*theta + 0.007*theta^2)/(theta^0.1*exp(0.1*alpha)) - theta"),
    "B": ("-0.075*alpha*exp(theta) + 0.167", "1.016*alpha*exp(theta) - theta"),
}

ds = build_dataset("chemical_kinetics", sigma1=0.001, sigma2=0.001, seed=0)
names = list(get_system("chemical_kinetics").names)
print(f"{ds.m} samples, truth rmse {100 * relative_rmse(get_system('chemical_kinetics'), ds):.2f}%")
for key, texts in MODELS.items():
    exprs = [parse_text(t, names) for t in texts]
    P = sum(count_parameters(e) for e in exprs)
    mse = model_mse(exprs, ds.X, ds.Y)
    print(f"{key}: P={P} rmse={100 * relative_rmse(exprs, ds):.2f}% aic={aic_score(P, mse, ds.m):.1f}")

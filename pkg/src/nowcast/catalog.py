"""Default indicator list for the Peruvian monthly GDP application.

Structured indicators are (id, label, unit, native frequency). The target,
GDP, is kept apart from the 53 structured predictors. Search-index series are
daily Google Trends exports on a 0-100 scale; only some of the 38 terms have
known names, the remainder get placeholder ids.
"""

TARGET = ("gdp", "GDP", "2007=100", "monthly")

STRUCTURED = (
    ("credit_pen", "Credit", "S/ Millions", "monthly"),
    ("credit_usd", "Credit", "US$ Millions", "monthly"),
    ("credit_const_fx", "Credit (constant exchange rate)", "S/ Millions", "monthly"),
    ("consumer_credit", "Consumer credits", "S/ Millions", "monthly"),
    ("mortgage_loans", "Mortgage Loans", "S/ Millions", "monthly"),
    ("deposits", "Deposits", "S/ Millions", "monthly"),
    ("deposits_2", "Deposits", "S/ Millions", "monthly"),
    ("chicken_sales", "Sales of chickens", "Metric Tons", "daily"),
    ("consumer_confidence", "Consumer Confidence Index", "Points", "monthly"),
    ("electricity", "Electricity Production", "GWh", "monthly"),
    ("hydrocarbons", "Hydrocarbon Production", "Millions", "daily"),
    ("expectations_3m", "3-Month Economic Expectations", "Points", "monthly"),
    ("oil", "Oil", "B/D", "daily"),
    ("natural_gas", "Natural Gas", "MCF", "daily"),
    ("cement", "Domestic Cement Consumption", "Index", "weekly"),
    ("imports_intermediate", "Import of Intermediate Inputs", "Index", "weekly"),
    ("imports_capital", "Import of Capital Goods", "Index", "weekly"),
    ("employed", "Employed Labor Force", "Thousands", "monthly"),
    ("properly_employed", "Properly Employed Population", "Thousands", "monthly"),
    ("gov_expenditure", "Non-Financial Gov. Expenditures", "S/ Millions", "monthly"),
    ("iafo", "IAFO", "Index", "monthly"),
    ("imported_inputs_volume", "Volume of Imported Inputs", "Index", "monthly"),
    ("terms_of_trade", "Terms of Trade", "Index", "monthly"),
    ("ipx", "IPX", "Index", "monthly"),
    ("ipm", "IPM", "Index", "monthly"),
    ("stock_index", "General Stock Market Index", "Percentages", "daily"),
    ("liquidity", "Liquidity", "Millions of Soles", "monthly"),
    ("cpi", "CPI", "Index", "monthly"),
    ("cpi_ex_food_energy", "Non Food and Energy Price Index", "Index", "monthly"),
    ("wpi", "Wholesale Price Index", "Index", "monthly"),
    ("core_cpi", "Core CPI", "Index", "monthly"),
    ("real_exchange_rate", "Multilateral Real Exchange Rate", "2009=100", "monthly"),
    ("embig", "EMBIG Peru", "Pbs", "daily"),
    ("wti", "Oil WTI", "Dollars per Barrel", "daily"),
    ("us_cpi", "USIPC", "Index", "monthly"),
    ("industrial_production", "Industrial Production Index", "YoY", "quarterly"),
    ("copper", "Copper", "cUS$/lb.", "daily"),
    ("gold", "Gold", "US$/oz.tr.", "daily"),
    ("us_pmi", "US Manufacturing PMI", "Points", "monthly"),
    ("fed_rate", "FED Interest Rate (Upper Limit)", "Percentages", "monthly"),
    ("vix", "VIX Index", "Percentages", "daily"),
    ("spread_2y5y", "Spread 2Y-5Y", "Points", "monthly"),
    ("china_ip", "China Industrial Production", "YoY", "monthly"),
    ("us_ppi", "PPI by All Commodities", "1982=100", "monthly"),
    ("atsm", "ATSM", "Degrees Celsius", "monthly"),
    ("anchovy", "Anchovy Landing", "Metric Tons", "daily"),
    ("anchovy_log", "Logarithm of Anchovy Landing", "Index", "daily"),
    ("anchovy_sa", "Anchovy Landing (seasonally adjusted)", "Index", "daily"),
    ("anchovy_sa_yoy", "Variation Anchovy Landing (seasonally adjusted)", "YoY", "daily"),
    ("rice", "Paddy Rice production", "Tons", "monthly"),
    ("potato", "Potato production", "Tons", "monthly"),
    ("onion", "Onion production", "Tons", "monthly"),
    ("tomato", "Tomato production", "Tons", "monthly"),
)

_NAMED_TERMS = (
    "inflacion", "recesion",
    "kia", "toyota", "cinema", "restaurantes", "creditos", "prestamos", "hipotecarios", "ofertas",
    "empleo", "desempleo", "trabajo",
    "mineria", "inversion",
    "crisis_peru", "quiebra", "economia", "crisis_economica",
    "flights", "peruflight_us", "visa", "el_nino",
)
N_SEARCH_TERMS = 38

SEARCH_TERMS = tuple(f"gt_{t}" for t in _NAMED_TERMS) + tuple(
    f"gt_term_{i:02d}" for i in range(len(_NAMED_TERMS) + 1, N_SEARCH_TERMS + 1)
)

ELECTRICITY_ID = "electricity"


def default_column_ids(p: int, structured_share: float = len(STRUCTURED) / (len(STRUCTURED) + N_SEARCH_TERMS)):
    """Column ids and categories for a ``p``-predictor panel.

    With ``p`` equal to 91 this is exactly the catalog; other sizes keep the
    structured share and fall back to numbered ids past the catalog's end.
    """
    n_struct = max(1, min(p, round(p * structured_share))) if p > 1 else 1
    n_unstr = p - n_struct
    struct = [s[0] for s in STRUCTURED[:n_struct]]
    struct += [f"x_struct_{i:03d}" for i in range(len(struct) + 1, n_struct + 1)]
    unstr = list(SEARCH_TERMS[:n_unstr])
    unstr += [f"gt_extra_{i:03d}" for i in range(len(unstr) + 1, n_unstr + 1)]
    ids = struct + unstr
    cats = ["structured"] * n_struct + ["unstructured"] * n_unstr
    return ids, cats

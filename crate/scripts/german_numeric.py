#!/usr/bin/env python3
"""Convert the categorical German credit table (UCI Statlog, 21 columns) into a
24-attribute whitespace-separated numeric file plus a {1,2} label column.

Usage: german_numeric.py germancredit.csv > data/german.data-numeric

Encoding (column order of the output):
  1-11  ordinal codes (1-based, UCI attribute order A_x1, A_x2, ...) for
        checking status, credit history, savings, employment, personal status,
        other debtors, property, other installment plans, job, telephone,
        foreign worker
  12-18 duration, credit amount / 100 (rounded half up), installment rate,
        residence, age, existing credits, people liable
  19-22 purpose indicators: new car, used car, furniture/equipment,
        radio/television
  23-24 housing indicators: rent, own
  25    label: 1 = good, 2 = bad
"""
import csv
import sys

ORDINAL = {
    "status_of_existing_checking_account": [
        "... < 0 DM", "0 <= ... < 200 DM",
        "... >= 200 DM / salary assignments for at least 1 year", "no checking account"],
    "credit_history": [
        "no credits taken/ all credits paid back duly", "all credits at this bank paid back duly",
        "existing credits paid back duly till now", "delay in paying off in the past",
        "critical account/ other credits existing (not at this bank)"],
    "savings_account_and_bonds": [
        "... < 100 DM", "100 <= ... < 500 DM", "500 <= ... < 1000 DM", "... >= 1000 DM",
        "unknown/ no savings account"],
    "present_employment_since": [
        "unemployed", "... < 1 year", "1 <= ... < 4 years", "4 <= ... < 7 years", "... >= 7 years"],
    "personal_status_and_sex": [
        "male : divorced/separated", "female : divorced/separated/married", "male : single",
        "male : married/widowed", "female : single"],
    "other_debtors_or_guarantors": ["none", "co-applicant", "guarantor"],
    "property": [
        "real estate", "building society savings agreement/ life insurance",
        "car or other, not in attribute Savings account/bonds", "unknown / no property"],
    "other_installment_plans": ["bank", "stores", "none"],
    "job": [
        "unemployed/ unskilled - non-resident", "unskilled - resident",
        "skilled employee / official",
        "management/ self-employed/ highly qualified employee/ officer"],
    "telephone": ["none", "yes, registered under the customers name"],
    "foreign_worker": ["yes", "no"],
}
NUMERIC = [
    "duration_in_month", "credit_amount", "installment_rate_in_percentage_of_disposable_income",
    "present_residence_since", "age_in_years", "number_of_existing_credits_at_this_bank",
    "number_of_people_being_liable_to_provide_maintenance_for",
]
PURPOSE = ["car (new)", "car (used)", "furniture/equipment", "radio/television"]
HOUSING = ["rent", "own"]


def encode(row):
    out = [ORDINAL[k].index(row[k]) + 1 for k in ORDINAL]
    for k in NUMERIC:
        v = int(row[k])
        out.append((v + 50) // 100 if k == "credit_amount" else v)
    out += [int(row["purpose"] == p) for p in PURPOSE]
    out += [int(row["housing"] == h) for h in HOUSING]
    out.append({"good": 1, "bad": 2}[row["creditability"]])
    return out


def main():
    with open(sys.argv[1], newline="") as fh:
        for row in csv.DictReader(fh):
            print(" ".join(f"{v:4d}" for v in encode(row)))


if __name__ == "__main__":
    main()

"""Finite-difference check of every loss, and what a broken reversal layer looks like."""

from molxfer import gradcheck

rows, ok = gradcheck.run_all(seed=0)
print(gradcheck.format_table(rows))
print("all passed" if ok else "FAILED")

print("\nwith the reversal sign flipped:")
for suite, name, err in gradcheck.transfer_rows(seed=0, grl_sign=1.0):
    print(f"  {name:<14} {err:.2e}  {'ok' if err < gradcheck.TOLERANCE else 'FAIL'}")

"""Closed-loop synthetic campaign.

A seven-strip scene (five shrub strips, bare soil, forest) is flown at 10,
20 and 30 m on nine consecutive days. Samples carry 1 K noise and a
polarized calibration bias of -2 K (H) and +2 K (V). Each altitude is
gridded at its native resolution (7, 14, 21 m) and retrieved with SCAV,
SCAH, DCA and MT-DCA. The printed table has the same columns as the
field-campaign accuracy table, but is computed against the scene truth.

Run with ``python demos/closed_loop_campaign.py`` (about a minute).
"""

from uavsm.pipeline import CampaignConfig, run_campaign


def main():
    result = run_campaign(CampaignConfig(), seed=0)
    print(f"{'algorithm':<9} {'res (m)':>7} {'bias':>8} {'rmse':>8} {'ubrmse':>8} {'r':>7} {'n':>6}")
    for row in result.metric_rows():
        print(f"{row['algorithm']:<9} {row['resolution']:>7g} {row['bias']:>8.4f} "
              f"{row['rmse']:>8.4f} {row['ubrmse']:>8.4f} {row['r']:>7.3f} {row['n']:>6d}")
    print("timings (s):", {k: round(v, 1) for k, v in result.timings.items()})
    # The calibration bias shows up as a retrieval bias; ubRMSE stays well
    # below 0.04 m3/m3 because the bias is constant across cells and days.


if __name__ == "__main__":
    main()

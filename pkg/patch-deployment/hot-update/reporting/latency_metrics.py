import numpy as np


def compute_latency_metrics(values, prefix):
    """
    Summary statistics of a list of latencies (microseconds).

    Args:
        values: Latency samples, possibly empty
        prefix: Name prefixed to every key, e.g. 'node_wall'

    Returns:
        dict with {prefix}_mean_us, _median_us, _std_us, _min_us, _max_us,
        _95th_percentile_us and {prefix}_count
    """
    if len(values):
        samples = np.asarray(values, dtype=float)
        return {
            f'{prefix}_mean_us': float(np.mean(samples)),
            f'{prefix}_median_us': float(np.median(samples)),
            f'{prefix}_std_us': float(np.std(samples)),
            f'{prefix}_min_us': float(np.min(samples)),
            f'{prefix}_max_us': float(np.max(samples)),
            f'{prefix}_95th_percentile_us': float(np.percentile(samples, 95)),
            f'{prefix}_count': int(samples.size),
        }
    return {
        f'{prefix}_mean_us': 0.0,
        f'{prefix}_median_us': 0.0,
        f'{prefix}_std_us': 0.0,
        f'{prefix}_min_us': 0.0,
        f'{prefix}_max_us': 0.0,
        f'{prefix}_95th_percentile_us': 0.0,
        f'{prefix}_count': 0,
    }

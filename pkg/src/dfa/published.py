"""Full-scale reference results (WideResNet-28-10, 240 epochs).

These are reported figures kept for comparison in reports. They are not
reachable with the desk-scale models in this package.
"""

# robust accuracy (%) on CIFAR-10 for the benchmark attack suite, in suite order
CIFAR10_ROBUST_ACCURACY = {
    "FGSM (8/255)": 74.18,
    "PGD-8 (4/255)": 32.12,
    "PGD-16 (4/255)": 22.12,
    "CW-100 (c=0.01)": 81.39,
    "CW-100 (c=0.05)": 74.72,
}
CIFAR10_CLEAN_ACCURACY = 96.80
CIFAR10_MEAN_ROBUST = 56.91
CIFAR10_STD_ROBUST = 24.66

# best F1 with CIFAR-10 as in-distribution
OOD_F1 = {
    "TinyImageNet-crop": 0.922,
    "TinyImageNet-resize": 0.911,
    "LSUN-crop": 0.934,
    "LSUN-resize": 0.937,
}

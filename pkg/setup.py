from setuptools import setup

setup(
    name="volwriter",
    version="0.1.0",
    py_modules=[
        "backtest",
        "bsm",
        "calibration",
        "config",
        "errors",
        "grid",
        "hedging",
        "main",
        "market_data",
        "metrics",
        "portfolio",
        "report",
        "strategy",
        "synth_market",
        "variance_gamma",
    ],
    install_requires=[
        'click>=8.1',
        'python-dotenv>=1.0.0',
        'tqdm>=4.66',
        'rich>=13.7.0',
        'numpy>=1.26',
        'scipy>=1.11',
        'pandas>=2.0',
        'matplotlib>=3.8',
    ],
    extras_require={
        'test': ['pytest>=7.4'],
    },
    description="Backtests of systematic index option writing with BSM and Variance-Gamma hedging",
    long_description=open('README.md').read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'volwriter=main:cli',
        ],
    },
)

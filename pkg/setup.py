"""
Setup script for the cell-free OTFS ISAC simulator
"""

from setuptools import setup, find_packages

# Read requirements
with open('requirements.txt') as f:
    requirements = [line.split('#')[0].strip() for line in f if line.strip() and not line.startswith('#')]

# Read README
with open('readme.md', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='cellfree-isac-sim',
    version='1.0.0',
    author='Cell-free ISAC Simulator Team',
    description='Cell-free MIMO OTFS/OFDM integrated sensing and communication simulator',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(include=['src', 'src.*']),
    install_requires=requirements,
    python_requires='>=3.10',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Operating System :: OS Independent',
    ],
    entry_points={
        'console_scripts': [
            'cellfree-isac=src.main:main',
        ],
    },
)

from setuptools import setup, find_packages

with open('requirements.txt') as f:
    requirements = [s for line in f if (s := line.strip()) and not s.startswith("#")]

setup(
    name='ladri_risk',
    version='0.1.0',
    packages=find_packages(exclude=['tests', 'tests.*']),
    description='Learned dynamic risk indicator for ADAS: simulation, HARA labeling and a risk classifier',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    install_requires=requirements,
    extras_require={'test': ['pytest>=8.0']},
    entry_points={
        'console_scripts': ['ladri=ladri.cli:main'],
    },
    classifiers=[
        'Programming Language :: Python :: 3.12',
    ],
)

import pandas as pd

readings = pd.read_csv('station_temps.csv')
readings = readings.sort_values('day')
smoothed = readings.rolling(3).mean()
smoothed.to_csv('station_temps_smoothed.csv')
